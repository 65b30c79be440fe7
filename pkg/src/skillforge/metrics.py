"""Evaluation metrics over trajectory logs and pool snapshots.

All functions here are pure readers of immutable logs. Usage is counted per
selection event: a skill was "used" when it was selected at a decision step;
continuation steps under the same activation do not count again.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import MetricError
from .skills import SkillPool, Tokenizer, online_score, whitespace_token_count
from .trajectory import Trajectory


@dataclass(frozen=True)
class UsageEvent:
    skill_id: int
    env_name: str
    backend_name: str
    episode_id: str


def usage_events(trajectories: Iterable[Trajectory]) -> list[UsageEvent]:
    """One event per skill selection across the logs."""
    events = []
    for traj in trajectories:
        for step in traj.steps:
            if step.skill_started:
                events.append(
                    UsageEvent(
                        skill_id=step.skill_id,
                        env_name=traj.env_name,
                        backend_name=traj.backend_name,
                        episode_id=traj.episode_id,
                    )
                )
    return events


def reuse_rate(
    pool: SkillPool,
    usage_log: Sequence[UsageEvent],
    scope: str = "in_domain",
    *,
    source_env: str | None = None,
    source_backend: str | None = None,
) -> float:
    """Fraction of stored skills used at least once under the scope's condition.

    in_domain counts any selection; cross_task requires a selection in an env
    different from the one the pool was learned on; cross_agent requires a
    selection by a different backend.
    """
    if not pool.skills:
        raise MetricError("reuse rate undefined for an empty pool")
    if scope not in ("in_domain", "cross_task", "cross_agent"):
        raise MetricError(f"unknown reuse scope {scope!r}")

    def qualifies(event: UsageEvent) -> bool:
        if scope == "in_domain":
            return True
        if scope == "cross_task":
            return source_env is None or event.env_name != source_env
        return source_backend is None or event.backend_name != source_backend

    used = {event.skill_id for event in usage_log if qualifies(event)}
    hits = sum(1 for skill in pool.skills if skill.id in used)
    return hits / len(pool.skills)


def storage_metrics(pool: SkillPool) -> dict[str, float]:
    """Total and average stored token counts over the pool."""
    if not pool.skills:
        raise MetricError("average tokens per unit undefined for an empty pool")
    total = sum(skill.token_count for skill in pool.skills)
    return {
        "total_stored_tokens": total,
        "avg_tokens_per_unit": total / len(pool.skills),
    }


def retrieval_ratio(trajectories: Sequence[Trajectory]) -> float:
    """Fraction of decision steps that triggered a skill selection."""
    total = sum(len(traj.steps) for traj in trajectories)
    if total == 0:
        raise MetricError("retrieval ratio undefined with zero steps")
    selections = sum(
        1 for traj in trajectories for step in traj.steps if step.skill_started
    )
    return selections / total


def delta_prompt_tokens(
    trajectories: Sequence[Trajectory],
    tokenizer: Tokenizer = whitespace_token_count,
) -> float:
    """Mean extra prompt tokens per step relative to the bare state text."""
    deltas = []
    for traj in trajectories:
        for step in traj.steps:
            if step.prompt is None:
                raise MetricError(
                    f"episode {traj.episode_id!r} has steps without recorded prompts"
                )
            deltas.append(tokenizer(step.prompt) - tokenizer(step.state.text))
    if not deltas:
        raise MetricError("prompt-token delta undefined with zero steps")
    return sum(deltas) / len(deltas)


def mean_return(trajectories: Sequence[Trajectory]) -> float:
    if not trajectories:
        raise MetricError("mean return undefined for an empty batch")
    return sum(t.total_return for t in trajectories) / len(trajectories)


def mean_pool_score(pool: SkillPool) -> float:
    if not pool.skills:
        raise MetricError("mean online score undefined for an empty pool")
    return sum(online_score(s) for s in pool.skills) / len(pool.skills)


@dataclass(frozen=True)
class BatchPoint:
    """One plot-data row: pool and performance statistics after a batch."""

    batch_index: int
    mean_return: float
    pool_size: int
    mean_online_score: float


PLOT_HEADER = ("batch_index", "mean_return", "pool_size", "mean_online_score")


def write_plot_data(points: Sequence[BatchPoint], path: str | Path) -> None:
    """Delimited per-batch training curve data for external plotting."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PLOT_HEADER)
        for p in points:
            writer.writerow([p.batch_index, p.mean_return, p.pool_size, p.mean_online_score])


def read_plot_data(path: str | Path) -> list[BatchPoint]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        return [
            BatchPoint(
                batch_index=int(row["batch_index"]),
                mean_return=float(row["mean_return"]),
                pool_size=int(row["pool_size"]),
                mean_online_score=float(row["mean_online_score"]),
            )
            for row in reader
        ]


def build_report(
    pool: SkillPool,
    trajectories: Sequence[Trajectory],
    *,
    scope: str = "in_domain",
    source_env: str | None = None,
    source_backend: str | None = None,
    success_threshold: float = 1.0,
    tokenizer: Tokenizer = whitespace_token_count,
) -> dict:
    """Metrics bundle for a set of rollouts against a pool snapshot."""
    events = usage_events(trajectories)
    returns = [t.total_return for t in trajectories]
    successes = sum(
        1 for t in trajectories if t.steps and t.steps[-1].reward >= success_threshold
    )
    n = len(trajectories)
    mean = sum(returns) / n if n else 0.0
    variance = sum((r - mean) ** 2 for r in returns) / n if n else 0.0
    report = {
        "episodes": n,
        "mean_return": mean,
        "std_return": variance**0.5,
        "success_rate": successes / n if n else 0.0,
        "reuse_rate": reuse_rate(
            pool, events, scope, source_env=source_env, source_backend=source_backend
        ),
        "retrieval_ratio": retrieval_ratio(trajectories) if n else None,
        "storage": storage_metrics(pool),
        "scope": scope,
        "env_names": sorted({t.env_name for t in trajectories}),
        "backend_names": sorted({t.backend_name for t in trajectories}),
    }
    try:
        report["delta_prompt_tokens"] = delta_prompt_tokens(trajectories, tokenizer)
    except MetricError:
        report["delta_prompt_tokens"] = None
    return report
