"""Episode records: states, steps, trajectories, and their JSONL log format.

One JSON object per line per episode; field names are stable so downstream
metric tools can read the logs without the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ValidationError


@dataclass(frozen=True)
class EnvState:
    """Natural-language environment state as seen by the agent."""

    text: str
    admissible: tuple[str, ...] | None = None
    terminal: bool = False
    step_index: int = 0

    def __post_init__(self):
        if not self.text:
            raise ValidationError("state field 'text' must be non-empty")
        if self.step_index < 0:
            raise ValidationError("state field 'step_index' must be >= 0")


@dataclass(frozen=True)
class Step:
    """One decision step: the state seen, the active skill, the action taken."""

    state: EnvState
    skill_id: int
    action: str
    behavior_logprob: float
    reward: float
    skill_started: bool = False
    skill_terminated: bool = False
    prompt: str | None = None


@dataclass(frozen=True)
class Trajectory:
    episode_id: str
    steps: tuple[Step, ...]
    total_return: float
    env_name: str = ""
    backend_name: str = ""

    def skill_ids(self) -> tuple[int, ...]:
        """Distinct skill ids in order of first appearance."""
        seen: dict[int, None] = {}
        for step in self.steps:
            seen.setdefault(step.skill_id, None)
        return tuple(seen)

    def selection_count(self, skill_id: int) -> int:
        """Number of distinct selection events of the skill in this episode."""
        return sum(1 for s in self.steps if s.skill_id == skill_id and s.skill_started)

    def active_indices(self, skill_id: int) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.steps) if s.skill_id == skill_id)

    def rewards(self) -> tuple[float, ...]:
        return tuple(s.reward for s in self.steps)


def _state_to_dict(state: EnvState) -> dict:
    return {
        "text": state.text,
        "admissible": list(state.admissible) if state.admissible is not None else None,
        "terminal": state.terminal,
        "step_index": state.step_index,
    }


def _state_from_dict(data: dict) -> EnvState:
    admissible = data.get("admissible")
    return EnvState(
        text=data["text"],
        admissible=tuple(admissible) if admissible is not None else None,
        terminal=bool(data["terminal"]),
        step_index=int(data["step_index"]),
    )


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "episode_id": traj.episode_id,
        "env_name": traj.env_name,
        "backend_name": traj.backend_name,
        "total_return": traj.total_return,
        "steps": [
            {
                "state": _state_to_dict(s.state),
                "skill_id": s.skill_id,
                "action": s.action,
                "behavior_logprob": s.behavior_logprob,
                "reward": s.reward,
                "skill_started": s.skill_started,
                "skill_terminated": s.skill_terminated,
                "prompt": s.prompt,
            }
            for s in traj.steps
        ],
    }


def trajectory_from_dict(data: dict) -> Trajectory:
    steps = tuple(
        Step(
            state=_state_from_dict(s["state"]),
            skill_id=int(s["skill_id"]),
            action=s["action"],
            behavior_logprob=float(s["behavior_logprob"]),
            reward=float(s["reward"]),
            skill_started=bool(s["skill_started"]),
            skill_terminated=bool(s["skill_terminated"]),
            prompt=s.get("prompt"),
        )
        for s in data["steps"]
    )
    return Trajectory(
        episode_id=data["episode_id"],
        steps=steps,
        total_return=float(data["total_return"]),
        env_name=data.get("env_name", ""),
        backend_name=data.get("backend_name", ""),
    )


def write_trajectories(trajectories: Iterable[Trajectory], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for traj in trajectories:
            handle.write(json.dumps(trajectory_to_dict(traj), sort_keys=True))
            handle.write("\n")


def read_trajectories(path: str | Path) -> Iterator[Trajectory]:
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                yield trajectory_from_dict(json.loads(line))
