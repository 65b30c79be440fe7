"""Skill data model: the procedural unit, its pool, lineage, rendering and persistence.

A skill is an immutable triple of natural-language texts (activation condition,
ordered execution steps, termination condition) plus lineage and score
statistics. The pool is a capacity-bounded ordered collection of skills carrying
the running baselines used by scoring. Both are frozen values: rollout workers
get snapshots, and mutation happens only between batches through functions that
return new values.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .errors import PoolFileError, ValidationError

Tokenizer = Callable[[str], int]


def whitespace_token_count(text: str) -> int:
    """Default token counter: whitespace-delimited word count."""
    return len(text.split())


@dataclass(frozen=True)
class Skill:
    id: int
    name: str
    initiation: str
    policy_steps: tuple[str, ...]
    termination: str
    version: int = 1
    parent_id: int | None = None
    created_batch: int = 0
    cum_gain: float = 0.0
    invocations: int = 0
    token_count: int = 0

    def __post_init__(self):
        if not self.name:
            raise ValidationError("skill field 'name' must be non-empty")
        if not self.initiation:
            raise ValidationError("skill field 'initiation' must be non-empty")
        if not self.policy_steps:
            raise ValidationError("skill field 'policy_steps' must be non-empty")
        if any(not step for step in self.policy_steps):
            raise ValidationError("skill field 'policy_steps' contains an empty step")
        if not self.termination:
            raise ValidationError("skill field 'termination' must be non-empty")
        if self.version < 1:
            raise ValidationError("skill field 'version' must be >= 1")
        if self.version == 1 and self.parent_id is not None:
            raise ValidationError("skill field 'parent_id' must be absent for a version-1 root")
        if self.version > 1 and self.parent_id is None:
            raise ValidationError("skill field 'parent_id' is required when version > 1")
        if self.invocations < 0:
            raise ValidationError("skill field 'invocations' must be >= 0")
        if self.token_count < 0:
            raise ValidationError("skill field 'token_count' must be >= 0")


def new_skill(
    name: str,
    initiation: str,
    policy_steps: Iterable[str],
    termination: str,
    parent: Skill | None = None,
    batch_index: int = 0,
    *,
    skill_id: int = 0,
    tokenizer: Tokenizer = whitespace_token_count,
) -> Skill:
    """Build a skill with zeroed score stats and a computed token count.

    A child of ``parent`` gets ``parent.version + 1`` and the parent's id in its
    lineage field; without a parent the skill is a version-1 root.
    """
    steps = tuple(policy_steps)
    skill = Skill(
        id=skill_id,
        name=name,
        initiation=initiation,
        policy_steps=steps,
        termination=termination,
        version=parent.version + 1 if parent is not None else 1,
        parent_id=parent.id if parent is not None else None,
        created_batch=batch_index,
    )
    return dataclasses.replace(skill, token_count=tokenizer(render_skill_text(skill)))


def render_skill_text(skill: Skill) -> str:
    """Deterministic three-header rendering used in prompts and token counting."""
    lines = [
        f"Name: {skill.name}",
        f"Activation Condition: {skill.initiation}",
        "Execution Procedure:",
    ]
    lines.extend(f"  {i}. {step}" for i, step in enumerate(skill.policy_steps, start=1))
    lines.append(f"Termination Condition: {skill.termination}")
    return "\n".join(lines)


def online_score(skill: Skill) -> float:
    """Cumulative gain divided by max(1, invocation count)."""
    return skill.cum_gain / max(1, skill.invocations)


@dataclass(frozen=True)
class SkillPool:
    skills: tuple[Skill, ...] = ()
    capacity: int = 16
    step_baseline: float = 0.0
    return_baseline: float = 0.0
    batch_index: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValidationError("pool field 'capacity' must be >= 1")
        if self.batch_index < 0:
            raise ValidationError("pool field 'batch_index' must be >= 0")
        ids = [s.id for s in self.skills]
        if len(set(ids)) != len(ids):
            raise ValidationError("pool contains duplicate skill ids")
        pairs = [(s.name, s.version) for s in self.skills]
        if len(set(pairs)) != len(pairs):
            raise ValidationError("pool contains duplicate (name, version) pairs")

    def __len__(self) -> int:
        return len(self.skills)

    def get(self, skill_id: int) -> Skill | None:
        for skill in self.skills:
            if skill.id == skill_id:
                return skill
        return None

    def next_skill_id(self) -> int:
        return max((s.id for s in self.skills), default=0) + 1

    def with_skills(self, skills: Iterable[Skill]) -> SkillPool:
        return dataclasses.replace(self, skills=tuple(skills))


_SKILL_FIELDS = (
    "id", "name", "version", "parent_id", "created_batch",
    "initiation", "policy_steps", "termination",
    "cum_gain", "invocations", "token_count",
)
_POOL_FIELDS = ("capacity", "batch_index", "step_baseline", "return_baseline", "skills")


def skill_to_dict(skill: Skill) -> dict:
    return {
        "id": skill.id,
        "name": skill.name,
        "version": skill.version,
        "parent_id": skill.parent_id,
        "created_batch": skill.created_batch,
        "initiation": skill.initiation,
        "policy_steps": list(skill.policy_steps),
        "termination": skill.termination,
        "cum_gain": skill.cum_gain,
        "invocations": skill.invocations,
        "token_count": skill.token_count,
    }


def skill_from_dict(data: dict) -> Skill:
    unknown = set(data) - set(_SKILL_FIELDS)
    if unknown:
        raise PoolFileError(f"unknown skill fields: {sorted(unknown)}")
    missing = set(_SKILL_FIELDS) - set(data)
    if missing:
        raise PoolFileError(f"missing skill fields: {sorted(missing)}")
    try:
        return Skill(
            id=int(data["id"]),
            name=data["name"],
            initiation=data["initiation"],
            policy_steps=tuple(data["policy_steps"]),
            termination=data["termination"],
            version=int(data["version"]),
            parent_id=data["parent_id"],
            created_batch=int(data["created_batch"]),
            cum_gain=float(data["cum_gain"]),
            invocations=int(data["invocations"]),
            token_count=int(data["token_count"]),
        )
    except (TypeError, ValueError, ValidationError) as exc:
        raise PoolFileError(f"invalid skill record: {exc}") from exc


def pool_to_json(pool: SkillPool) -> str:
    doc = {
        "capacity": pool.capacity,
        "batch_index": pool.batch_index,
        "step_baseline": pool.step_baseline,
        "return_baseline": pool.return_baseline,
        "skills": [skill_to_dict(s) for s in pool.skills],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def pool_from_json(text: str) -> SkillPool:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PoolFileError(f"pool file is not valid JSON at offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise PoolFileError("pool file must hold a JSON object")
    unknown = set(doc) - set(_POOL_FIELDS)
    if unknown:
        raise PoolFileError(f"unknown pool fields: {sorted(unknown)}")
    missing = set(_POOL_FIELDS) - set(doc)
    if missing:
        raise PoolFileError(f"missing pool fields: {sorted(missing)}")
    try:
        return SkillPool(
            skills=tuple(skill_from_dict(s) for s in doc["skills"]),
            capacity=int(doc["capacity"]),
            step_baseline=float(doc["step_baseline"]),
            return_baseline=float(doc["return_baseline"]),
            batch_index=int(doc["batch_index"]),
        )
    except (TypeError, ValueError, ValidationError) as exc:
        raise PoolFileError(f"invalid pool document: {exc}") from exc


def save_pool(pool: SkillPool, path: str | Path) -> None:
    Path(path).write_text(pool_to_json(pool), encoding="utf-8")


def load_pool(path: str | Path) -> SkillPool:
    return pool_from_json(Path(path).read_text(encoding="utf-8"))
