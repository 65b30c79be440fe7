"""Natural-language update directions for skills, and the candidate step.

A per-trajectory gradient diagnoses the segment one skill controlled and
prescribes per-component refinement text (empty string = leave that component
alone). Batch aggregation consolidates gradients into one stable direction,
dropping conflicting signals; applying the result to a skill yields candidate
children for verification.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

from .errors import EvolutionError, ProtocolError, ValidationError
from .skills import Skill, Tokenizer, new_skill, whitespace_token_count
from .trajectory import Trajectory


class DoctorBackend(Protocol):
    def diagnose(self, skill: Skill, segment_text: str, reward: float) -> str: ...


class EvolverBackend(Protocol):
    def propose(self, skill: Skill, update, mode: str = "gradient") -> str: ...


class SummarizerBackend(Protocol):
    def summarize(self, trajectory_text: str, reward: float) -> str: ...


@dataclass(frozen=True)
class SemanticGradient:
    diagnosis: str
    is_related: bool
    g_initiation: str = ""
    g_policy: str = ""
    g_termination: str = ""
    source_episode: str = ""

    def __post_init__(self):
        if not self.diagnosis:
            raise ValidationError("gradient field 'diagnosis' must be non-empty")
        if not self.is_related and (self.g_initiation or self.g_policy or self.g_termination):
            raise ValidationError("an unrelated gradient must carry empty components")

    @property
    def has_update(self) -> bool:
        return bool(self.g_initiation or self.g_policy or self.g_termination)


@dataclass(frozen=True)
class AggregatedGradient:
    g_initiation: str = ""
    g_policy: str = ""
    g_termination: str = ""
    contributing: tuple[str, ...] = ()
    dropped: tuple[str, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not (self.g_initiation or self.g_policy or self.g_termination)


# ── Wire format ──────────────────────────────────────────────────────

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_json(text: str) -> dict:
    """Pull one JSON object out of a reply that may be fenced or padded."""
    fenced = _FENCE_RE.search(text)
    body = fenced.group(1) if fenced else text
    start, end = body.find("{"), body.rfind("}")
    if start < 0 or end <= start:
        raise ProtocolError("reply contains no JSON object", raw=text)
    try:
        doc = json.loads(body[start : end + 1])
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"reply is not valid JSON: {exc}", raw=text) from exc
    if not isinstance(doc, dict):
        raise ProtocolError("reply JSON is not an object", raw=text)
    return doc


def parse_gradient_json(text: str, source_episode: str = "") -> SemanticGradient:
    """Parse a diagnosis reply: {diagnosis, is_related, semantic_gradient{...}}.

    An unrelated reply has its components normalized to empty, which is how
    downstream aggregation excludes it.
    """
    doc = extract_json(text)
    for key in ("diagnosis", "is_related", "semantic_gradient"):
        if key not in doc:
            raise ProtocolError(f"gradient reply missing key {key!r}", raw=text)
    grad = doc["semantic_gradient"]
    if not isinstance(grad, dict):
        raise ProtocolError("'semantic_gradient' must be an object", raw=text)
    for key in ("initiation", "policy", "termination"):
        if key not in grad:
            raise ProtocolError(f"gradient reply missing component {key!r}", raw=text)
    related = bool(doc["is_related"])
    return SemanticGradient(
        diagnosis=str(doc["diagnosis"]),
        is_related=related,
        g_initiation=str(grad["initiation"]) if related else "",
        g_policy=str(grad["policy"]) if related else "",
        g_termination=str(grad["termination"]) if related else "",
        source_episode=source_episode,
    )


def gradient_to_json(gradient: SemanticGradient) -> str:
    doc = {
        "diagnosis": gradient.diagnosis,
        "is_related": gradient.is_related,
        "semantic_gradient": {
            "initiation": gradient.g_initiation,
            "policy": gradient.g_policy,
            "termination": gradient.g_termination,
        },
    }
    return json.dumps(doc, indent=4)


@dataclass(frozen=True)
class CandidateSpec:
    name: str
    initiation: str
    policy: tuple[str, ...]
    termination: str


def parse_candidate_json(text: str) -> CandidateSpec:
    """Parse an evolver reply: {skill_name, initiation, policy, termination}.

    Fencing is tolerated; field names are not. A bare string policy is treated
    as a single step.
    """
    doc = extract_json(text)
    expected = {"skill_name", "initiation", "policy", "termination"}
    if set(doc) != expected:
        raise ProtocolError(
            f"candidate reply fields {sorted(doc)} do not match {sorted(expected)}", raw=text
        )
    policy = doc["policy"]
    if isinstance(policy, str):
        steps: tuple[str, ...] = (policy,)
    elif isinstance(policy, list) and all(isinstance(s, str) for s in policy):
        steps = tuple(policy)
    else:
        raise ProtocolError("'policy' must be a string or list of strings", raw=text)
    return CandidateSpec(
        name=str(doc["skill_name"]),
        initiation=str(doc["initiation"]),
        policy=steps,
        termination=str(doc["termination"]),
    )


# ── Trace rendering for the text roles ───────────────────────────────


def render_segment(trajectory: Trajectory, skill_id: int) -> str:
    """Text form of the steps one skill controlled, for diagnosis prompts."""
    lines = []
    for i in trajectory.active_indices(skill_id):
        step = trajectory.steps[i]
        lines.append(f"[State] {step.state.text}")
        lines.append(f"[Action] {step.action}")
        lines.append(f"[Reward] {step.reward}")
    return "\n".join(lines)


def render_trajectory_text(trajectory: Trajectory) -> str:
    lines = []
    for step in trajectory.steps:
        lines.append(f"[State] {step.state.text}")
        lines.append(f"[Action] {step.action}")
        lines.append(f"[Reward] {step.reward}")
    return "\n".join(lines)


# ── Operations ───────────────────────────────────────────────────────


def extract_gradient(
    trajectory: Trajectory,
    skill: Skill,
    doctor: DoctorBackend,
    *,
    retries: int = 1,
) -> SemanticGradient:
    """Diagnose the segment a skill controlled and parse the reply."""
    if skill.id not in trajectory.skill_ids():
        raise ValidationError(
            f"skill {skill.id} was never active in episode {trajectory.episode_id!r}"
        )
    segment = render_segment(trajectory, skill.id)
    last_exc: ProtocolError | None = None
    for _ in range(retries + 1):
        reply = doctor.diagnose(skill, segment, trajectory.total_return)
        try:
            return parse_gradient_json(reply, source_episode=trajectory.episode_id)
        except ProtocolError as exc:
            last_exc = exc
    raise last_exc  # type: ignore[misc]


class AggregatorBackend(Protocol):
    def consolidate(self, related: Sequence[SemanticGradient]) -> AggregatedGradient: ...


class KeywordMajorityAggregator:
    """Deterministic consolidation: exact-duplicate collapse, then a majority
    vote over a configured keyword set; minority texts are dropped along with
    their episodes. Output ordering is lexicographic, so aggregation is
    invariant to input permutation.
    """

    def __init__(self, keywords: Sequence[str] = ()):
        self.keywords = tuple(keywords)

    def _majority_filter(
        self, items: list[tuple[str, str]]
    ) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
        if not self.keywords:
            return items, []
        tally = {kw: 0 for kw in self.keywords}
        for _, text in items:
            for kw in self.keywords:
                if kw in text:
                    tally[kw] += 1
        best = max(self.keywords, key=lambda kw: tally[kw])
        if tally[best] == 0:
            return items, []
        kept = [(ep, text) for ep, text in items if best in text]
        lost = [(ep, text) for ep, text in items if best not in text]
        return kept, lost

    def consolidate(self, related: Sequence[SemanticGradient]) -> AggregatedGradient:
        components = {
            "g_initiation": [(g.source_episode, g.g_initiation) for g in related if g.g_initiation],
            "g_policy": [(g.source_episode, g.g_policy) for g in related if g.g_policy],
            "g_termination": [
                (g.source_episode, g.g_termination) for g in related if g.g_termination
            ],
        }
        texts: dict[str, str] = {}
        kept_eps: set[str] = set()
        dropped_eps: set[str] = set()
        for name, items in components.items():
            kept, lost = self._majority_filter(items)
            texts[name] = "\n".join(sorted({text for _, text in kept}))
            kept_eps.update(ep for ep, _ in kept)
            dropped_eps.update(ep for ep, _ in lost)
        dropped_eps -= kept_eps
        return AggregatedGradient(
            g_initiation=texts["g_initiation"],
            g_policy=texts["g_policy"],
            g_termination=texts["g_termination"],
            contributing=tuple(sorted(kept_eps)),
            dropped=tuple(sorted(dropped_eps)),
        )


class ConcatenatingAggregator:
    """Pass-through consolidation: distinct texts joined per component, for
    backends whose evolver prompt does the batch-level filtering itself."""

    def consolidate(self, related: Sequence[SemanticGradient]) -> AggregatedGradient:
        def join(texts: Iterable[str]) -> str:
            return "\n".join(sorted({t for t in texts if t}))

        contributing = tuple(sorted({g.source_episode for g in related if g.has_update}))
        return AggregatedGradient(
            g_initiation=join(g.g_initiation for g in related),
            g_policy=join(g.g_policy for g in related),
            g_termination=join(g.g_termination for g in related),
            contributing=contributing,
        )


def aggregate_gradients(
    gradients: Sequence[SemanticGradient], aggregator: AggregatorBackend
) -> AggregatedGradient:
    """Consolidate per-trajectory gradients into one batch direction.

    Unrelated gradients are excluded up front. An all-unrelated batch yields an
    empty aggregate, which signals "no update direction" rather than an error.
    """
    if not gradients:
        raise ValidationError("aggregate_gradients requires a non-empty gradient list")
    related = [g for g in gradients if g.is_related]
    if not related:
        return AggregatedGradient()
    return aggregator.consolidate(related)


def format_update_directions(aggregated: AggregatedGradient) -> str:
    """Render an aggregate for evolver prompts."""
    def show(text: str) -> str:
        return text if text else "(no change)"

    return (
        f"Initiation update: {show(aggregated.g_initiation)}\n"
        f"Policy update: {show(aggregated.g_policy)}\n"
        f"Termination update: {show(aggregated.g_termination)}"
    )


def _identity_candidates(
    skill: Skill, n_candidates: int, first_id: int, created_batch: int, tokenizer: Tokenizer
) -> list[Skill]:
    return [
        new_skill(
            skill.name,
            skill.initiation,
            skill.policy_steps,
            skill.termination,
            parent=skill,
            batch_index=created_batch,
            skill_id=first_id + j,
            tokenizer=tokenizer,
        )
        for j in range(n_candidates)
    ]


def apply_gradient(
    skill: Skill,
    aggregated: AggregatedGradient,
    evolver: EvolverBackend,
    n_candidates: int = 3,
    *,
    first_id: int = 0,
    created_batch: int = 0,
    tokenizer: Tokenizer = whitespace_token_count,
    retries: int = 1,
) -> list[Skill]:
    """Produce candidate children of a skill along the aggregated direction.

    An empty aggregate short-circuits to identity candidates (new lineage,
    same component texts) without consulting the backend. Slots whose replies
    stay unparseable after retries are skipped; if none survive, the skill is
    skipped this batch.
    """
    if n_candidates < 1:
        raise ValidationError("n_candidates must be >= 1")
    if aggregated.is_empty:
        return _identity_candidates(skill, n_candidates, first_id, created_batch, tokenizer)
    candidates: list[Skill] = []
    for _ in range(n_candidates):
        spec: CandidateSpec | None = None
        for _ in range(retries + 1):
            try:
                spec = parse_candidate_json(evolver.propose(skill, aggregated, mode="gradient"))
                break
            except ProtocolError:
                spec = None
        if spec is None:
            continue
        candidates.append(
            new_skill(
                spec.name,
                spec.initiation,
                spec.policy,
                spec.termination,
                parent=skill,
                batch_index=created_batch,
                skill_id=first_id + len(candidates),
                tokenizer=tokenizer,
            )
        )
    if not candidates:
        raise EvolutionError(f"no parseable candidate for skill {skill.id} ({skill.name})")
    return candidates


def apply_summaries(
    skill: Skill,
    summaries: Sequence[str],
    evolver: EvolverBackend,
    n_candidates: int = 3,
    *,
    first_id: int = 0,
    created_batch: int = 0,
    tokenizer: Tokenizer = whitespace_token_count,
    retries: int = 1,
) -> list[Skill]:
    """Candidate children from neutral trajectory summaries (the no-gradient
    ablation path)."""
    if n_candidates < 1:
        raise ValidationError("n_candidates must be >= 1")
    candidates: list[Skill] = []
    for _ in range(n_candidates):
        spec: CandidateSpec | None = None
        for _ in range(retries + 1):
            try:
                spec = parse_candidate_json(
                    evolver.propose(skill, list(summaries), mode="summaries")
                )
                break
            except ProtocolError:
                spec = None
        if spec is None:
            continue
        candidates.append(
            new_skill(
                spec.name,
                spec.initiation,
                spec.policy,
                spec.termination,
                parent=skill,
                batch_index=created_batch,
                skill_id=first_id + len(candidates),
                tokenizer=tokenizer,
            )
        )
    if not candidates:
        raise EvolutionError(f"no parseable candidate for skill {skill.id} ({skill.name})")
    return candidates


def summarize_trajectory(
    trajectory: Trajectory, summarizer: SummarizerBackend, *, retries: int = 1
) -> str:
    """Neutral factual summary of an episode, no diagnosis, no advice."""
    if not trajectory.steps:
        raise ValidationError("cannot summarize an empty trajectory")
    text = render_trajectory_text(trajectory)
    last_exc: ProtocolError | None = None
    for _ in range(retries + 1):
        reply = summarizer.summarize(text, trajectory.total_return)
        try:
            doc = extract_json(reply)
        except ProtocolError as exc:
            last_exc = exc
            continue
        if "summary" not in doc or not isinstance(doc["summary"], str):
            last_exc = ProtocolError("summary reply missing 'summary' string", raw=reply)
            continue
        return doc["summary"]
    raise last_exc  # type: ignore[misc]
