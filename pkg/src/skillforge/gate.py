"""Trust-region verification of candidate skills against historical behavior.

Each candidate is scored counterfactually on the (state, action) pairs its
parent produced: the importance ratio compares the candidate's likelihood of
the recorded action with the recorded behavior likelihood, advantages come
from return-to-go minus a running baseline, and the clipped surrogate keeps
large policy shifts from being rewarded. Only the best candidate is admitted,
and only if its score is strictly positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .backends import PolicyBackend
from .errors import CapabilityError, GateError, ValidationError
from .skills import Skill
from .trajectory import Trajectory

LOG_RATIO_MIN = math.log(1e-6)
LOG_RATIO_MAX = math.log(1e6)


@dataclass(frozen=True)
class GateStep:
    trajectory_index: int
    step_index: int
    behavior_logprob: float
    candidate_logprob: float


@dataclass(frozen=True)
class GateInput:
    """Everything the surrogate needs: the scored steps, each owning
    trajectory's full reward sequence, and the gate parameters."""

    steps: tuple[GateStep, ...]
    rewards: tuple[tuple[float, ...], ...]
    gamma: float = 1.0
    epsilon: float = 0.2
    return_baseline: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValidationError("gamma must lie in (0, 1]")
        if self.epsilon <= 0.0:
            raise ValidationError("epsilon must be > 0")
        for step in self.steps:
            if not (0 <= step.trajectory_index < len(self.rewards)):
                raise ValidationError(f"step references unknown trajectory {step.trajectory_index}")
            if not (0 <= step.step_index < len(self.rewards[step.trajectory_index])):
                raise ValidationError(
                    f"step index {step.step_index} outside trajectory "
                    f"{step.trajectory_index} of length {len(self.rewards[step.trajectory_index])}"
                )


@dataclass(frozen=True)
class GateReport:
    candidate_id: int
    candidate_name: str
    surrogate: float
    accepted: bool
    per_trajectory_terms: tuple[float, ...]
    approximate_scoring: bool = False

    def to_dict(self) -> dict:
        return {
            "candidate_id": self.candidate_id,
            "candidate_name": self.candidate_name,
            "surrogate": self.surrogate,
            "accepted": self.accepted,
            "per_trajectory_terms": list(self.per_trajectory_terms),
            "approximate_scoring": self.approximate_scoring,
        }


def return_to_go(rewards: Sequence[float], gamma: float) -> list[float]:
    """Discounted suffix sums: the return from each step to the end."""
    if not (0.0 < gamma <= 1.0):
        raise ValidationError("gamma must lie in (0, 1]")
    n = len(rewards)
    return [
        sum(gamma ** (k - t) * rewards[k] for k in range(t, n))
        for t in range(n)
    ]


def advantages(returns_to_go: Sequence[float], baseline: float) -> list[float]:
    return [g - baseline for g in returns_to_go]


def clipped_term(rho: float, advantage: float, epsilon: float) -> float:
    """One clipped-surrogate step term: min of the raw and ratio-clipped
    advantage products."""
    if rho <= 0.0:
        raise ValidationError("importance ratio must be positive")
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be > 0")
    clipped_rho = min(max(rho, 1.0 - epsilon), 1.0 + epsilon)
    return min(rho * advantage, clipped_rho * advantage)


def clamp_log_ratio(log_ratio: float) -> float:
    """Numerical safety: ratios live in [1e-6, 1e6] before exponentiation."""
    return min(max(log_ratio, LOG_RATIO_MIN), LOG_RATIO_MAX)


def surrogate_terms(gate_input: GateInput) -> list[float]:
    """Per-trajectory surrogate terms: the sum of clipped step terms over a
    trajectory's scored steps, normalized by the full trajectory length.

    Summation order is fixed (trajectory index, then step index), so the
    result does not depend on how the steps were gathered.
    """
    by_traj: dict[int, list[GateStep]] = {}
    for step in gate_input.steps:
        by_traj.setdefault(step.trajectory_index, []).append(step)
    terms: list[float] = []
    for ti in sorted(by_traj):
        rewards = gate_input.rewards[ti]
        rtg = return_to_go(rewards, gate_input.gamma)
        total = 0.0
        for step in sorted(by_traj[ti], key=lambda s: s.step_index):
            advantage = rtg[step.step_index] - gate_input.return_baseline
            rho = math.exp(clamp_log_ratio(step.candidate_logprob - step.behavior_logprob))
            total += clipped_term(rho, advantage, gate_input.epsilon)
        terms.append(total / len(rewards))
    return terms


def surrogate(gate_input: GateInput) -> float:
    """Mean per-trajectory surrogate term; the candidate's verification score."""
    terms = surrogate_terms(gate_input)
    if not terms:
        raise GateError("no scored steps in any trajectory; candidate is unverifiable")
    return sum(terms) / len(terms)


def build_gate_input(
    candidate: Skill,
    batch: Sequence[Trajectory],
    scorer: PolicyBackend,
    parent_id: int,
    *,
    gamma: float = 1.0,
    epsilon: float = 0.2,
    return_baseline: float = 0.0,
    whole_trajectory: bool = False,
) -> GateInput:
    """Score the candidate on the parent's historical steps across the batch.

    Only trajectories where the parent was active participate. By default the
    scored steps are the parent-controlled ones; the whole-trajectory flag
    widens them to every step of those trajectories for sensitivity testing.
    """
    owning = [t for t in batch if parent_id in t.skill_ids()]
    steps: list[GateStep] = []
    rewards: list[tuple[float, ...]] = []
    for ti, traj in enumerate(owning):
        rewards.append(traj.rewards())
        indices = (
            range(len(traj.steps)) if whole_trajectory else traj.active_indices(parent_id)
        )
        for si in indices:
            step = traj.steps[si]
            steps.append(
                GateStep(
                    trajectory_index=ti,
                    step_index=si,
                    behavior_logprob=step.behavior_logprob,
                    candidate_logprob=scorer.action_logprob(step.state, candidate, step.action),
                )
            )
    if not steps:
        raise GateError(
            f"parent skill {parent_id} has no active steps in the batch; nothing to verify"
        )
    return GateInput(
        steps=tuple(steps),
        rewards=tuple(rewards),
        gamma=gamma,
        epsilon=epsilon,
        return_baseline=return_baseline,
    )


def gate_select(
    candidates: Sequence[Skill],
    batch: Sequence[Trajectory],
    scorer: PolicyBackend,
    parent_id: int,
    *,
    gamma: float = 1.0,
    epsilon: float = 0.2,
    return_baseline: float = 0.0,
    whole_trajectory: bool = False,
) -> tuple[Skill | None, list[GateReport]]:
    """Best-of-N selection under strict positivity.

    Every candidate gets a report; the argmax by score (ties to the lowest
    candidate id) is accepted only when its score exceeds zero.
    """
    if not candidates:
        raise ValidationError("gate_select requires at least one candidate")
    approximate = bool(getattr(scorer, "approximate_scoring", False))
    scored: list[tuple[Skill, float, tuple[float, ...]]] = []
    for candidate in candidates:
        try:
            gate_input = build_gate_input(
                candidate,
                batch,
                scorer,
                parent_id,
                gamma=gamma,
                epsilon=epsilon,
                return_baseline=return_baseline,
                whole_trajectory=whole_trajectory,
            )
        except CapabilityError as exc:
            raise GateError(f"scoring backend lacks logprob capability: {exc}") from exc
        terms = tuple(surrogate_terms(gate_input))
        scored.append((candidate, sum(terms) / len(terms), terms))

    best, best_score, _ = max(scored, key=lambda item: (item[1], -item[0].id))
    accepted = best if best_score > 0.0 else None
    reports = [
        GateReport(
            candidate_id=cand.id,
            candidate_name=cand.name,
            surrogate=score,
            accepted=accepted is not None and cand.id == accepted.id,
            per_trajectory_terms=terms,
            approximate_scoring=approximate,
        )
        for cand, score, terms in scored
    ]
    return accepted, reports


def update_return_baseline(
    current: float, batch_returns: Sequence[float], alpha: float = 0.1
) -> float:
    """Exponential moving average of mean episode return; empty batches leave
    the baseline unchanged."""
    if not batch_returns:
        return current
    if not (0.0 < alpha <= 1.0):
        raise ValidationError("alpha must lie in (0, 1]")
    mean = sum(batch_returns) / len(batch_returns)
    return (1.0 - alpha) * current + alpha * mean
