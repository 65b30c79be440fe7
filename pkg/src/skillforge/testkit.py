"""Independent oracles and fixtures for verifying the production paths.

Everything here is written as a direct, unoptimized transcription of the
definitions, deliberately sharing no implementation code with the modules it
checks (only the data types cross the boundary). The stub server provides
canned OpenAI-shaped responses for exercising the remote backend offline.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, HTTPServer
from typing import Callable, Sequence

from .envs import PegFeedback
from .errors import GateError, ValidationError
from .gate import GateInput


def naive_surrogate(gate_input: GateInput) -> float:
    """Reference evaluator: triple loop over trajectories, steps, branches."""
    lo = math.log(1e-6)
    hi = math.log(1e6)
    per_trajectory = []
    for ti in range(len(gate_input.rewards)):
        rewards = gate_input.rewards[ti]
        active = [s for s in gate_input.steps if s.trajectory_index == ti]
        if not active:
            continue
        active.sort(key=lambda s: s.step_index)
        total = 0.0
        for step in active:
            value = 0.0
            for k in range(step.step_index, len(rewards)):
                value += gate_input.gamma ** (k - step.step_index) * rewards[k]
            advantage = value - gate_input.return_baseline
            log_ratio = step.candidate_logprob - step.behavior_logprob
            if log_ratio < lo:
                log_ratio = lo
            if log_ratio > hi:
                log_ratio = hi
            ratio = math.exp(log_ratio)
            unclipped = ratio * advantage
            bounded = ratio
            if bounded < 1.0 - gate_input.epsilon:
                bounded = 1.0 - gate_input.epsilon
            if bounded > 1.0 + gate_input.epsilon:
                bounded = 1.0 + gate_input.epsilon
            clipped = bounded * advantage
            total += unclipped if unclipped < clipped else clipped
        per_trajectory.append(total / len(rewards))
    if not per_trajectory:
        raise GateError("no scored steps in any trajectory")
    return sum(per_trajectory) / len(per_trajectory)


def naive_peg_count(secret: Sequence[int], guess: Sequence[int]) -> PegFeedback:
    """Reference peg counter: exact matches first, then a double loop that
    pairs up leftover digits one-to-one."""
    if len(secret) != len(guess):
        raise ValidationError("secret and guess must have equal length")
    n = len(secret)
    used_secret = [False] * n
    used_guess = [False] * n
    black = 0
    for i in range(n):
        if secret[i] == guess[i]:
            black += 1
            used_secret[i] = True
            used_guess[i] = True
    white = 0
    for i in range(n):
        if used_guess[i]:
            continue
        for j in range(n):
            if used_secret[j]:
                continue
            if guess[i] == secret[j]:
                white += 1
                used_secret[j] = True
                used_guess[i] = True
                break
    return PegFeedback(black=black, white=white)


# ── Stub HTTP server ─────────────────────────────────────────────────


@dataclass
class StubRule:
    """Pairs a request matcher with the response body it should earn."""

    matcher: Callable[[dict], bool]
    response: dict


def chat_response(content: str, token_logprobs: list[tuple[str, float]] | None = None) -> dict:
    """OpenAI-shaped chat completion body."""
    choice: dict = {"message": {"role": "assistant", "content": content}}
    if token_logprobs is not None:
        choice["logprobs"] = {
            "content": [{"token": t, "logprob": lp} for t, lp in token_logprobs]
        }
    return {"choices": [choice]}


def echo_response(tokens: list[tuple[str, float | None]]) -> dict:
    """Legacy completions body with echoed prompt logprobs."""
    return {
        "choices": [
            {
                "text": "".join(t for t, _ in tokens),
                "logprobs": {
                    "tokens": [t for t, _ in tokens],
                    "token_logprobs": [lp for _, lp in tokens],
                },
            }
        ]
    }


class StubServer:
    """Local endpoint serving scripted responses and recording request bodies.

    An unmatched request returns HTTP 500 and is remembered so the test can
    fail with the offending body.
    """

    def __init__(self, rules: list[StubRule]):
        self.rules = list(rules)
        self.requests: list[dict] = []
        self.unmatched: list[dict] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                body["_path"] = self.path
                outer.requests.append(body)
                for rule in outer.rules:
                    if rule.matcher(body):
                        payload = json.dumps(rule.response).encode("utf-8")
                        self.send_response(200)
                        self.send_header("Content-Type", "application/json")
                        self.send_header("Content-Length", str(len(payload)))
                        self.end_headers()
                        self.wfile.write(payload)
                        return
                outer.unmatched.append(body)
                payload = json.dumps({"error": "no stub rule matched"}).encode("utf-8")
                self.send_response(500)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = HTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> StubServer:
        self._thread.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
