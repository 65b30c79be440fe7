"""Action-generation and scoring backends.

The runtime talks to four roles: an action policy (sampling plus likelihood
scoring of fixed actions), a termination judge, the diagnosis/evolution/summary
text roles, and an optional embedder. This module defines the wire-format
parsing shared by every implementation and a remote implementation speaking an
OpenAI-compatible chat protocol with token logprobs. Deterministic scripted
implementations live in :mod:`skillforge.scripted`.
"""

from __future__ import annotations

import math
import os
import re
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import requests

from . import prompts
from .errors import CapabilityError, ProtocolError, TransportError
from .skills import Skill
from .trajectory import EnvState

FLOOR_LOGPROB = math.log(1e-6)


@dataclass(frozen=True)
class ActionSample:
    """An action extracted from a backend reply plus its span log-likelihood."""

    action: str
    logprob: float
    raw: str
    prompt: str | None = None


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model: str
    api_key_env: str = "SKILLFORGE_API_KEY"
    temperature: float = 0.0
    max_retries: int = 2
    timeout: float = 30.0
    supports_logprobs: bool = True
    scoring_mode: str = "constrained"  # "teacher" needs /completions echo support
    name: str = ""

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.scoring_mode not in ("teacher", "constrained"):
            raise ValueError("scoring_mode must be 'teacher' or 'constrained'")

    @property
    def display_name(self) -> str:
        return self.name or self.model


class PolicyBackend(Protocol):
    name: str
    approximate_scoring: bool

    def sample_action(self, state: EnvState, skill: Skill) -> ActionSample: ...

    def action_logprob(self, state: EnvState, skill: Skill, action: str) -> float: ...


class TerminationBackend(Protocol):
    def judge(self, state: EnvState, skill: Skill) -> str: ...


class Embedder(Protocol):
    def embed(self, text: str) -> list[float]: ...


# ── Reply parsing ────────────────────────────────────────────────────

_ACTION_RE = re.compile(r"<action>(.*?)</action>", re.DOTALL)
_STATUS_RE = re.compile(r"<status>\s*(DONE|CONTINUE)\s*</status>", re.IGNORECASE)


def extract_action(raw: str) -> tuple[str, int, int]:
    """Return the action text and its [start, end) character span in ``raw``."""
    match = _ACTION_RE.search(raw)
    if match is None:
        raise ProtocolError("reply contains no <action>...</action> span", raw=raw)
    return match.group(1).strip(), match.start(1), match.end(1)


def parse_status(raw: str) -> str:
    match = _STATUS_RE.search(raw)
    if match is None:
        raise ProtocolError("reply contains no <status> tag", raw=raw)
    return match.group(1).upper()


def sum_span_logprob(tokens: Sequence[tuple[str, float]], start: int, end: int) -> float:
    """Sum logprobs of the tokens overlapping the [start, end) character span.

    ``tokens`` must concatenate to the text the span indexes into.
    """
    total = 0.0
    offset = 0
    for text, logprob in tokens:
        token_start, token_end = offset, offset + len(text)
        offset = token_end
        if token_end <= start:
            continue
        if token_start >= end:
            break
        total += logprob
    return total


# ── Remote OpenAI-compatible backend ─────────────────────────────────


class ChatTransport:
    """Minimal chat-completions client with retries and optional logprobs."""

    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        last_exc: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = self._session.post(
                    url, json=payload, headers=self._headers(), timeout=self.config.timeout
                )
                resp.raise_for_status()
                return resp.json()
            except (requests.RequestException, ValueError) as exc:
                last_exc = exc
                if attempt < self.config.max_retries:
                    time.sleep(0.5 * (2**attempt))
        raise TransportError(f"request to {url} failed after retries: {last_exc}")

    def complete(
        self, prompt: str, *, logprobs: bool = False, max_tokens: int | None = None
    ) -> tuple[str, list[tuple[str, float]] | None]:
        payload: dict = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        if logprobs:
            payload["logprobs"] = True
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        body = self._post("/chat/completions", payload)
        try:
            choice = body["choices"][0]
            content = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed completion body: {exc}", raw=str(body)) from exc
        tokens = None
        logprob_block = choice.get("logprobs")
        if logprob_block and logprob_block.get("content"):
            tokens = [(t["token"], float(t["logprob"])) for t in logprob_block["content"]]
        return content, tokens

    def score_echo(self, prompt: str, continuation: str) -> list[tuple[str, float]]:
        """Teacher-forced scoring through the legacy /completions echo path."""
        payload = {
            "model": self.config.model,
            "prompt": prompt + continuation,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 1,
        }
        body = self._post("/completions", payload)
        try:
            lp = body["choices"][0]["logprobs"]
            tokens = lp["tokens"]
            values = lp["token_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed echo body: {exc}", raw=str(body)) from exc
        return [(t, float(v) if v is not None else 0.0) for t, v in zip(tokens, values)]


class RemotePolicy:
    """Action policy over a remote chat endpoint.

    Sampling requests token logprobs and sums them over the action span.
    Scoring a fixed historical action uses teacher forcing when the protocol
    supports it, otherwise a completion constrained to the action text; the
    constrained mode is flagged approximate.
    """

    def __init__(self, config: BackendConfig, prompt_set: prompts.PromptSet | None = None):
        self.config = config
        self.transport = ChatTransport(config)
        self.prompt_set = prompt_set or prompts.PromptSet.default()
        self.name = config.display_name

    @property
    def approximate_scoring(self) -> bool:
        return self.config.scoring_mode == "constrained"

    def sample_action(self, state: EnvState, skill: Skill) -> ActionSample:
        prompt = prompts.render_decision(self.prompt_set.decision, state, skill)
        last_exc: ProtocolError | None = None
        for _ in range(self.config.max_retries + 1):
            content, tokens = self.transport.complete(
                prompt, logprobs=self.config.supports_logprobs
            )
            try:
                action, start, end = extract_action(content)
            except ProtocolError as exc:
                last_exc = exc
                continue
            logprob = sum_span_logprob(tokens, start, end) if tokens else 0.0
            return ActionSample(action=action, logprob=logprob, raw=content, prompt=prompt)
        raise last_exc  # type: ignore[misc]

    def action_logprob(self, state: EnvState, skill: Skill, action: str) -> float:
        if not self.config.supports_logprobs:
            raise CapabilityError(
                f"backend {self.name} reports no logprob capability; cannot score actions"
            )
        prompt = prompts.render_decision(self.prompt_set.decision, state, skill)
        if self.config.scoring_mode == "teacher":
            continuation = f"<action>{action}</action>"
            tokens = self.transport.score_echo(prompt, continuation)
            text = "".join(t for t, _ in tokens)
            start = text.rfind(action)
            if start < 0:
                raise ProtocolError("echoed text does not contain the action", raw=text)
            return sum_span_logprob(tokens, start, start + len(action))
        constrained = (
            prompt
            + "\n\nFor likelihood scoring, output exactly this action and nothing else:\n"
            + f"<action>{action}</action>"
        )
        content, tokens = self.transport.complete(constrained, logprobs=True)
        try:
            _, start, end = extract_action(content)
        except ProtocolError:
            return FLOOR_LOGPROB
        if tokens is None:
            raise CapabilityError(f"backend {self.name} returned no logprobs while scoring")
        return sum_span_logprob(tokens, start, end)


class RemoteJudge:
    def __init__(self, config: BackendConfig, prompt_set: prompts.PromptSet | None = None):
        self.config = config
        self.transport = ChatTransport(config)
        self.prompt_set = prompt_set or prompts.PromptSet.default()

    def judge(self, state: EnvState, skill: Skill) -> str:
        prompt = prompts.render_termination(self.prompt_set.termination, state, skill)
        last_exc: ProtocolError | None = None
        for _ in range(self.config.max_retries + 1):
            content, _ = self.transport.complete(prompt)
            try:
                return parse_status(content)
            except ProtocolError as exc:
                last_exc = exc
        raise last_exc  # type: ignore[misc]


class RemoteDoctor:
    def __init__(self, config: BackendConfig, prompt_set: prompts.PromptSet | None = None):
        self.transport = ChatTransport(config)
        self.prompt_set = prompt_set or prompts.PromptSet.default()

    def diagnose(self, skill: Skill, segment_text: str, reward: float) -> str:
        prompt = prompts.render_doctor(self.prompt_set.doctor, skill, segment_text, reward)
        content, _ = self.transport.complete(prompt)
        return content


class RemoteEvolver:
    def __init__(self, config: BackendConfig, prompt_set: prompts.PromptSet | None = None):
        self.transport = ChatTransport(config)
        self.prompt_set = prompt_set or prompts.PromptSet.default()

    def propose(self, skill: Skill, update, mode: str = "gradient") -> str:
        from .gradients import format_update_directions

        if mode == "summaries":
            summaries_text = "\n".join(f"- {s}" for s in update)
            prompt = prompts.render_evolver_no_sg(self.prompt_set.evolver_no_sg, skill, summaries_text)
        else:
            prompt = prompts.render_evolver(
                self.prompt_set.evolver, skill, format_update_directions(update)
            )
        content, _ = self.transport.complete(prompt)
        return content


class RemoteSummarizer:
    def __init__(self, config: BackendConfig, prompt_set: prompts.PromptSet | None = None):
        self.transport = ChatTransport(config)
        self.prompt_set = prompt_set or prompts.PromptSet.default()

    def summarize(self, trajectory_text: str, reward: float) -> str:
        prompt = prompts.render_summarizer(self.prompt_set.summarizer, trajectory_text, reward)
        content, _ = self.transport.complete(prompt)
        return content


class RemoteEmbedder:
    def __init__(self, config: BackendConfig):
        self.config = config
        self.transport = ChatTransport(config)

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ValueError("cannot embed empty text")
        body = self.transport._post(
            "/embeddings", {"model": self.config.model, "input": text}
        )
        try:
            return [float(x) for x in body["data"][0]["embedding"]]
        except (KeyError, IndexError, TypeError) as exc:
            raise CapabilityError(f"embedding endpoint unusable: {exc}") from exc
