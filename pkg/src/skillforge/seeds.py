"""Built-in seed skills and seed-file loading.

Two generic seeds ship with the package: an opening-move planner for the
start of an episode and a feedback-inference skill for everything after.
A seeds file can replace them; it holds either a full pool document or a bare
list of skill component objects.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import PoolFileError
from .skills import (
    Skill,
    SkillPool,
    Tokenizer,
    new_skill,
    pool_from_json,
    whitespace_token_count,
)


def builtin_seed_skills(tokenizer: Tokenizer = whitespace_token_count) -> tuple[Skill, ...]:
    opener = new_skill(
        "StrategicPlanning",
        initiation="At the very beginning of the task, when no feedback or prior information is available.",
        policy_steps=(
            "Establish the space of possible answers allowed by the rules.",
            "Pick a diverse exploratory first action that reduces uncertainty as much as possible.",
        ),
        termination="Stop once the first exploratory action has been submitted and its feedback observed.",
        skill_id=1,
        tokenizer=tokenizer,
    )
    inference = new_skill(
        "FeedbackInference",
        initiation="When feedback from at least one earlier action is available in the interaction history.",
        policy_steps=(
            "List the constraints implied by every piece of feedback received so far.",
            "Discard candidate answers that contradict any constraint, and never repeat a past action.",
            "Choose the untried action consistent with all constraints that is most informative.",
        ),
        termination="Stop when the episode ends or when new feedback no longer changes the constraints.",
        skill_id=2,
        tokenizer=tokenizer,
    )
    return (opener, inference)


def seed_pool(
    capacity: int = 16,
    seeds: tuple[Skill, ...] | None = None,
    tokenizer: Tokenizer = whitespace_token_count,
) -> SkillPool:
    return SkillPool(
        skills=seeds if seeds is not None else builtin_seed_skills(tokenizer),
        capacity=capacity,
    )


def load_seeds(path: str | Path, tokenizer: Tokenizer = whitespace_token_count) -> tuple[Skill, ...]:
    """Seed skills from a file: a pool document or a list of components."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PoolFileError(f"seeds file is not valid JSON at offset {exc.pos}: {exc.msg}") from exc
    if isinstance(doc, dict):
        return pool_from_json(text).skills
    if not isinstance(doc, list):
        raise PoolFileError("seeds file must hold a pool document or a list of skills")
    skills = []
    for i, item in enumerate(doc):
        extra = set(item) - {"name", "initiation", "policy_steps", "termination"}
        if extra:
            raise PoolFileError(f"seed {i} has unknown fields: {sorted(extra)}")
        skills.append(
            new_skill(
                item["name"],
                item["initiation"],
                tuple(item["policy_steps"]),
                item["termination"],
                skill_id=i + 1,
                tokenizer=tokenizer,
            )
        )
    return tuple(skills)
