"""Skill gains, score updates, pruning, and the batch-level evolution step.

One evolution step runs, per skill invoked in the batch: diagnose → aggregate
→ propose candidates → verify → admit the winner (parent retained; both then
compete on score). Scores update afterwards, followed by pruning: skills with
non-positive score that have actually run are dropped, near-duplicate
activation conditions are deduplicated, and capacity overflow removes the
lowest scorers. The pool is never emptied entirely.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

from .backends import PolicyBackend
from .errors import GainError, SkillForgeError
from .gate import gate_select, update_return_baseline
from .gradients import (
    AggregatorBackend,
    DoctorBackend,
    EvolverBackend,
    SummarizerBackend,
    aggregate_gradients,
    apply_gradient,
    apply_summaries,
    extract_gradient,
    gradient_to_json,
    summarize_trajectory,
)
from .similarity import SimilarityFn, jaccard_similarity
from .skills import (
    Skill,
    SkillPool,
    Tokenizer,
    online_score,
    render_skill_text,
    skill_to_dict,
    whitespace_token_count,
)
from .trajectory import Trajectory


def skill_gain(
    trajectory: Trajectory,
    skill_id: int,
    step_baseline: float,
    reward_mode: str = "per_step",
    return_baseline: float = 0.0,
) -> float:
    """Advantage-style gain of one skill in one episode.

    Per-step mode averages baselined rewards over the steps the skill was
    active. Trajectory-level mode spreads the baselined episode return evenly
    over the episode, so the average over active steps is the same constant
    regardless of how many steps the skill controlled.
    """
    active = trajectory.active_indices(skill_id)
    if not active:
        raise GainError(f"skill {skill_id} never active in episode {trajectory.episode_id!r}")
    if reward_mode == "trajectory_level":
        return (trajectory.total_return - return_baseline) / len(trajectory.steps)
    if reward_mode != "per_step":
        raise ValueError("reward_mode must be 'per_step' or 'trajectory_level'")
    rewards = trajectory.rewards()
    return sum(rewards[i] - step_baseline for i in active) / len(active)


def update_scores(
    pool: SkillPool,
    batch: Sequence[Trajectory],
    *,
    alpha: float = 0.1,
    reward_mode: str = "per_step",
) -> SkillPool:
    """Accumulate gains and invocation counts for every skill the batch used,
    then advance the step baseline and batch index.

    Gains are computed against the pre-update baselines; the step baseline
    moves by EMA over the batch's per-step rewards afterwards.
    """
    updated = []
    for skill in pool.skills:
        gain_total = 0.0
        count = 0
        for traj in batch:
            if traj.active_indices(skill.id):
                gain_total += skill_gain(
                    traj,
                    skill.id,
                    pool.step_baseline,
                    reward_mode=reward_mode,
                    return_baseline=pool.return_baseline,
                )
                count += traj.selection_count(skill.id)
        if count:
            skill = dataclasses.replace(
                skill,
                cum_gain=skill.cum_gain + gain_total,
                invocations=skill.invocations + count,
            )
        updated.append(skill)

    all_rewards = [r for traj in batch for r in traj.rewards()]
    step_baseline = pool.step_baseline
    if all_rewards:
        step_baseline = (1.0 - alpha) * step_baseline + alpha * (
            sum(all_rewards) / len(all_rewards)
        )
    return dataclasses.replace(
        pool,
        skills=tuple(updated),
        step_baseline=step_baseline,
        batch_index=pool.batch_index + 1,
    )


@dataclass(frozen=True)
class PruneEvent:
    skill_id: int
    name: str
    version: int
    reason: str

    def to_dict(self) -> dict:
        return {
            "skill_id": self.skill_id,
            "name": self.name,
            "version": self.version,
            "reason": self.reason,
        }


def _event(skill: Skill, reason: str) -> PruneEvent:
    return PruneEvent(skill_id=skill.id, name=skill.name, version=skill.version, reason=reason)


def prune(
    pool: SkillPool,
    sim: SimilarityFn = jaccard_similarity,
    redundancy_threshold: float = 0.9,
) -> tuple[SkillPool, list[PruneEvent]]:
    """Score-based maintenance, in order: drop invoked skills with
    non-positive score (never-run skills are exempt so fresh admissions get a
    chance to be evaluated), drop the lower scorer of any near-duplicate
    activation pair, then evict lowest scorers until within capacity. The
    single best skill always survives.
    """
    events: list[PruneEvent] = []
    skills = list(pool.skills)

    keep, doomed = [], []
    for s in skills:
        (doomed if s.invocations > 0 and online_score(s) <= 0.0 else keep).append(s)
    if not keep and skills:
        survivor = max(skills, key=lambda s: (online_score(s), -s.id))
        keep = [survivor]
        doomed = [s for s in doomed if s.id != survivor.id]
    events.extend(_event(s, "non_positive_score") for s in doomed)

    alive = {s.id: s for s in keep}
    ids = sorted(alive)
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            a_id, b_id = ids[i], ids[j]
            if a_id not in alive or b_id not in alive:
                continue
            a, b = alive[a_id], alive[b_id]
            if sim(a.initiation, b.initiation) >= redundancy_threshold:
                victim = min((a, b), key=lambda s: (online_score(s), -s.id))
                del alive[victim.id]
                events.append(_event(victim, "redundant"))

    keep = [s for s in keep if s.id in alive]
    while len(keep) > pool.capacity:
        victim = min(keep, key=lambda s: (online_score(s), -s.id))
        keep.remove(victim)
        events.append(_event(victim, "capacity"))

    return pool.with_skills(keep), events


def prune_fifo(pool: SkillPool) -> tuple[SkillPool, list[PruneEvent]]:
    """Capacity-only ablation: evict in creation order, ignoring scores."""
    events: list[PruneEvent] = []
    keep = list(pool.skills)
    while len(keep) > pool.capacity:
        victim = min(keep, key=lambda s: (s.created_batch, s.id))
        keep.remove(victim)
        events.append(_event(victim, "fifo"))
    return pool.with_skills(keep), events


@dataclass
class EvolutionBackends:
    policy: PolicyBackend
    doctor: DoctorBackend | None = None
    aggregator: AggregatorBackend | None = None
    evolver: EvolverBackend | None = None
    summarizer: SummarizerBackend | None = None


@dataclass(frozen=True)
class EvolutionParams:
    gamma: float = 1.0
    epsilon: float = 0.2
    alpha: float = 0.1
    n_candidates: int = 3
    redundancy_threshold: float = 0.9
    reward_mode: str = "per_step"
    no_gate: bool = False
    fifo: bool = False
    no_sg: bool = False
    whole_trajectory_gate: bool = False


def _ensure_unique_name(
    skill: Skill, taken: set[tuple[str, int]], tokenizer: Tokenizer
) -> Skill:
    """Disambiguate a (name, version) collision with the admitted skill's id.

    Re-refining the same parent in a later batch produces another child at the
    same version; both may live in the pool at once, so the newcomer's name
    gets a stable suffix.
    """
    if (skill.name, skill.version) not in taken:
        return skill
    name = skill.name
    while (name, skill.version) in taken:
        name = f"{name}.{skill.id}"
    renamed = dataclasses.replace(skill, name=name)
    return dataclasses.replace(renamed, token_count=tokenizer(render_skill_text(renamed)))


@dataclass
class EvolveRecord:
    """Audit record for one evolution step; one JSON object per batch."""

    batch_index: int
    invoked_skills: list[int] = field(default_factory=list)
    gradients: dict[str, list[str]] = field(default_factory=dict)
    candidates: dict[str, list[dict]] = field(default_factory=dict)
    gate_reports: dict[str, list[dict]] = field(default_factory=dict)
    admissions: list[int] = field(default_factory=list)
    prunings: list[dict] = field(default_factory=list)
    baselines: dict[str, float] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "batch_index": self.batch_index,
            "invoked_skills": self.invoked_skills,
            "gradients": self.gradients,
            "candidates": self.candidates,
            "gate_reports": self.gate_reports,
            "admissions": self.admissions,
            "prunings": self.prunings,
            "baselines": self.baselines,
            "skipped": self.skipped,
        }


def evolve(
    pool: SkillPool,
    batch: Sequence[Trajectory],
    backends: EvolutionBackends,
    params: EvolutionParams = EvolutionParams(),
    *,
    sim: SimilarityFn = jaccard_similarity,
    tokenizer: Tokenizer = whitespace_token_count,
) -> tuple[SkillPool, EvolveRecord]:
    """One application of the pool evolution operator.

    Per-skill pipeline failures are recorded and skipped; they never abort the
    batch. Verification always runs against the baselines the batch was
    collected under; baselines advance afterwards.
    """
    record = EvolveRecord(batch_index=pool.batch_index)
    invoked = sorted(
        skill.id
        for skill in pool.skills
        if any(traj.active_indices(skill.id) for traj in batch)
    )
    record.invoked_skills = invoked

    next_id = pool.next_skill_id()
    admissions: list[Skill] = []
    for skill_id in invoked:
        skill = pool.get(skill_id)
        assert skill is not None
        key = str(skill_id)
        owning = [t for t in batch if t.active_indices(skill_id)]
        try:
            if params.no_sg:
                if backends.summarizer is None or backends.evolver is None:
                    record.skipped[key] = "no summarizer/evolver configured"
                    continue
                summaries = [summarize_trajectory(t, backends.summarizer) for t in owning]
                record.gradients[key] = summaries
                candidates = apply_summaries(
                    skill,
                    summaries,
                    backends.evolver,
                    params.n_candidates,
                    first_id=next_id,
                    created_batch=pool.batch_index,
                    tokenizer=tokenizer,
                )
            else:
                if (
                    backends.doctor is None
                    or backends.aggregator is None
                    or backends.evolver is None
                ):
                    record.skipped[key] = "no doctor/aggregator/evolver configured"
                    continue
                gradients = [extract_gradient(t, skill, backends.doctor) for t in owning]
                record.gradients[key] = [gradient_to_json(g) for g in gradients]
                aggregated = aggregate_gradients(gradients, backends.aggregator)
                if aggregated.is_empty:
                    record.skipped[key] = "empty aggregate; no update direction"
                    continue
                candidates = apply_gradient(
                    skill,
                    aggregated,
                    backends.evolver,
                    params.n_candidates,
                    first_id=next_id,
                    created_batch=pool.batch_index,
                    tokenizer=tokenizer,
                )
            next_id += len(candidates)
            record.candidates[key] = [skill_to_dict(c) for c in candidates]

            accepted, reports = gate_select(
                candidates,
                batch,
                backends.policy,
                skill_id,
                gamma=params.gamma,
                epsilon=params.epsilon,
                return_baseline=pool.return_baseline,
                whole_trajectory=params.whole_trajectory_gate,
            )
            if params.no_gate:
                # Ablation: the best candidate enters unconditionally.
                best = max(reports, key=lambda r: (r.surrogate, -r.candidate_id))
                accepted = next(c for c in candidates if c.id == best.candidate_id)
                reports = [
                    dataclasses.replace(r, accepted=r.candidate_id == best.candidate_id)
                    for r in reports
                ]
            record.gate_reports[key] = [r.to_dict() for r in reports]
            if accepted is not None:
                taken = {(s.name, s.version) for s in pool.skills}
                taken.update((s.name, s.version) for s in admissions)
                accepted = _ensure_unique_name(accepted, taken, tokenizer)
                admissions.append(accepted)
                record.admissions.append(accepted.id)
        except SkillForgeError as exc:
            record.skipped[key] = f"{type(exc).__name__}: {exc}"
            continue

    grown = pool.with_skills(pool.skills + tuple(admissions))
    scored = update_scores(grown, batch, alpha=params.alpha, reward_mode=params.reward_mode)
    if params.fifo:
        pruned, events = prune_fifo(scored)
    else:
        pruned, events = prune(scored, sim=sim, redundancy_threshold=params.redundancy_threshold)
    record.prunings = [e.to_dict() for e in events]

    new_baseline = update_return_baseline(
        pool.return_baseline, [t.total_return for t in batch], alpha=params.alpha
    )
    final = dataclasses.replace(pruned, return_baseline=new_baseline)
    record.baselines = {
        "step_baseline": final.step_baseline,
        "return_baseline": final.return_baseline,
    }
    return final, record
