"""Deterministic scripted backends for offline runs and tests.

Every implementation here is pure: the same inputs always produce the same
outputs, which makes whole training runs bit-reproducible. The rule-table
policy covers arbitrary fixtures; the cue-conditioned line-walk policy is the
built-in demonstration of the full evolution loop (it only behaves well when
the active skill text tells it to head right).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass

from .backends import FLOOR_LOGPROB, ActionSample, parse_status
from .errors import ProtocolError, ValidationError
from .skills import Skill, render_skill_text
from .trajectory import EnvState


@dataclass(frozen=True)
class PolicyRule:
    state_contains: str = ""
    skill_contains: str = ""
    action: str = ""
    logprob: float = 0.0

    def matches(self, state: EnvState, skill_text: str) -> bool:
        return self.state_contains in state.text and self.skill_contains in skill_text


class TablePolicy:
    """Rule-table policy: first matching rule wins.

    Scoring a fixed action consults the sampling rules first (so the sampled
    action scores exactly what sampling reported), then the scoring table,
    then the floor log-probability for unknown actions.
    """

    def __init__(
        self,
        rules: list[PolicyRule],
        scoring: list[PolicyRule] | None = None,
        default_action: str = "",
        floor_logprob: float = FLOOR_LOGPROB,
        name: str = "scripted-table",
    ):
        self.rules = list(rules)
        self.scoring = list(scoring or [])
        self.default_action = default_action
        self.floor_logprob = floor_logprob
        self.name = name
        self.approximate_scoring = False

    def _skill_key(self, skill: Skill) -> str:
        return f"{skill.name}\n{render_skill_text(skill)}"

    def sample_action(self, state: EnvState, skill: Skill) -> ActionSample:
        key = self._skill_key(skill)
        for rule in self.rules:
            if rule.matches(state, key):
                return ActionSample(
                    action=rule.action,
                    logprob=rule.logprob,
                    raw=f"<action>{rule.action}</action>",
                )
        if self.default_action:
            return ActionSample(
                action=self.default_action,
                logprob=self.floor_logprob,
                raw=f"<action>{self.default_action}</action>",
            )
        raise ProtocolError(f"no rule matches state {state.text[:60]!r}", raw="")

    def action_logprob(self, state: EnvState, skill: Skill, action: str) -> float:
        key = self._skill_key(skill)
        for rule in self.rules:
            if rule.matches(state, key) and rule.action == action:
                return rule.logprob
        for rule in self.scoring:
            if rule.matches(state, key) and rule.action == action:
                return rule.logprob
        return self.floor_logprob


_POSITION_RE = re.compile(r"position (\d+) of")


class CueLineWorldPolicy:
    """Line-walk policy that only heads for the goal when the skill says so.

    With the cue phrase anywhere in the rendered skill text the policy moves
    right with high probability. Without it, it follows a wandering heuristic
    (right on even positions, left on odd ones) that only reaches the goal
    from cells adjacent to it.
    """

    def __init__(self, cue: str = "go right", cue_prob: float = 0.9, base_prob: float = 0.6):
        self.cue = cue.lower()
        self.cue_logprob = math.log(cue_prob)
        self.cue_other_logprob = math.log(1.0 - cue_prob)
        self.base_logprob = math.log(base_prob)
        self.base_other_logprob = math.log(1.0 - base_prob)
        self.name = "scripted-lineworld-cue"
        self.approximate_scoring = False

    def _has_cue(self, skill: Skill) -> bool:
        return self.cue in render_skill_text(skill).lower()

    @staticmethod
    def _position(state: EnvState) -> int:
        match = _POSITION_RE.search(state.text)
        return int(match.group(1)) if match else 0

    def _preferred(self, state: EnvState, skill: Skill) -> str:
        if self._has_cue(skill):
            return "right"
        return "right" if self._position(state) % 2 == 0 else "left"

    def sample_action(self, state: EnvState, skill: Skill) -> ActionSample:
        action = self._preferred(state, skill)
        logprob = self.cue_logprob if self._has_cue(skill) else self.base_logprob
        return ActionSample(action=action, logprob=logprob, raw=f"<action>{action}</action>")

    def action_logprob(self, state: EnvState, skill: Skill, action: str) -> float:
        preferred = self._preferred(state, skill)
        if self._has_cue(skill):
            return self.cue_logprob if action == preferred else self.cue_other_logprob
        return self.base_logprob if action == preferred else self.base_other_logprob


class StaticJudge:
    """Always returns the same decision."""

    def __init__(self, decision: str = "CONTINUE"):
        if decision not in ("DONE", "CONTINUE"):
            raise ValidationError("judge decision must be DONE or CONTINUE")
        self.decision = decision

    def judge(self, state: EnvState, skill: Skill) -> str:
        return self.decision


class SubstringJudge:
    """DONE when any key phrase appears in the state text."""

    def __init__(self, done_keys: list[str]):
        self.done_keys = list(done_keys)

    def judge(self, state: EnvState, skill: Skill) -> str:
        text = state.text
        if any(key in text for key in self.done_keys):
            return "DONE"
        return "CONTINUE"


class RawReplyJudge:
    """Feeds canned raw replies through the strict status parser.

    Exists to exercise the protocol-error path without a server.
    """

    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.calls = 0

    def judge(self, state: EnvState, skill: Skill) -> str:
        reply = self.replies[min(self.calls, len(self.replies) - 1)]
        self.calls += 1
        return parse_status(reply)


@dataclass(frozen=True)
class DoctorRule:
    pattern: str
    reply: str


class ScriptedDoctor:
    """Keyed canned diagnoses: first rule whose pattern appears in the skill
    text, trace, or reward line wins; otherwise the default reply."""

    def __init__(self, rules: list[DoctorRule], default_reply: str):
        self.rules = list(rules)
        self.default_reply = default_reply

    def diagnose(self, skill: Skill, segment_text: str, reward: float) -> str:
        haystack = f"{render_skill_text(skill)}\n{segment_text}\nreward: {reward!r}"
        for rule in self.rules:
            if rule.pattern in haystack:
                return rule.reply
        return self.default_reply


def no_update_reply(diagnosis: str = "The skill performed as intended; no change needed.") -> str:
    return json.dumps(
        {
            "diagnosis": diagnosis,
            "is_related": True,
            "semantic_gradient": {"initiation": "", "policy": "", "termination": ""},
        }
    )


def lineworld_doctor() -> ScriptedDoctor:
    """Doctor for the line-walk demo: failing episodes yield directions that
    retarget the activation text and add the go-right cue to the steps."""
    failing = json.dumps(
        {
            "diagnosis": (
                "The agent wandered back and forth and never reached the goal "
                "on the right end of the line."
            ),
            "is_related": True,
            "semantic_gradient": {
                "initiation": "When standing on a line at a position away from the goal.",
                "policy": (
                    "Drop the cautious wandering and always go right toward the goal "
                    "until it is reached."
                ),
                "termination": "",
            },
        }
    )
    return ScriptedDoctor(
        rules=[DoctorRule(pattern="reward: 0.0", reply=failing)],
        default_reply=no_update_reply(),
    )


class ScriptedEvolver:
    """Structural candidate transform: replace components that have update
    directions, append the policy direction as a new step, keep the rest."""

    def propose(self, skill: Skill, update, mode: str = "gradient") -> str:
        if mode == "summaries":
            steps = list(skill.policy_steps) + ["Review the outcome summaries before acting."]
            doc = {
                "skill_name": skill.name,
                "initiation": skill.initiation,
                "policy": steps,
                "termination": skill.termination,
            }
            return json.dumps(doc)
        steps = list(skill.policy_steps)
        if update.g_policy:
            steps.append(update.g_policy)
        doc = {
            "skill_name": skill.name,
            "initiation": update.g_initiation or skill.initiation,
            "policy": steps,
            "termination": update.g_termination or skill.termination,
        }
        return json.dumps(doc)


class ScriptedSummarizer:
    """Deterministic template fill over the visible trace."""

    def summarize(self, trajectory_text: str, reward: float) -> str:
        steps = sum(1 for ln in trajectory_text.splitlines() if ln.startswith("[Action]"))
        summary = (
            f"The agent took {steps} recorded steps. "
            f"The final reward was {reward}."
        )
        return json.dumps({"summary": summary})


class HashEmbedder:
    """Token-bucket embedder: stable hash of each token picks a bucket.

    Identical texts embed identically; texts with disjoint tokens land in
    disjoint buckets (absent hash collisions) and so have cosine zero.
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValidationError("embedder dim must be >= 1")
        self.dim = dim

    def bucket(self, token: str) -> int:
        digest = hashlib.sha1(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "big") % self.dim

    def embed(self, text: str) -> list[float]:
        if not text:
            raise ValidationError("cannot embed empty text")
        vec = [0.0] * self.dim
        for token in text.lower().split():
            vec[self.bucket(token)] += 1.0
        return vec
