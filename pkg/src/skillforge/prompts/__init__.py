"""Prompt template loading and rendering.

Templates are plain-text assets with ``${name}`` placeholders. Defaults ship
with the package; any of them can be replaced by a file path in the run
config. Rendering is pure: the same inputs always produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from string import Template

from ..skills import Skill, render_skill_text
from ..trajectory import EnvState

_TEMPLATE_NAMES = ("decision", "termination", "doctor", "evolver", "summarizer", "evolver_no_sg")


def _load_default(name: str) -> str:
    return resources.files("skillforge.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class PromptSet:
    decision: str
    termination: str
    doctor: str
    evolver: str
    summarizer: str
    evolver_no_sg: str

    @classmethod
    def default(cls) -> PromptSet:
        return cls(**{name: _load_default(name) for name in _TEMPLATE_NAMES})

    def with_overrides(self, overrides: dict[str, str]) -> PromptSet:
        """Replace templates by name with file contents."""
        loaded = {}
        for name, path in overrides.items():
            if name not in _TEMPLATE_NAMES:
                raise KeyError(f"unknown prompt template {name!r}")
            loaded[name] = Path(path).read_text(encoding="utf-8")
        return replace(self, **loaded)


def render_decision(template: str, state: EnvState, skill: Skill) -> str:
    admissible = ", ".join(state.admissible) if state.admissible else "(none listed)"
    return Template(template).substitute(
        state=state.text,
        admissible=admissible,
        skill=render_skill_text(skill),
    )


def render_termination(template: str, state: EnvState, skill: Skill) -> str:
    return Template(template).substitute(
        state=state.text,
        name=skill.name,
        initiation=skill.initiation,
        termination=skill.termination,
    )


def render_doctor(template: str, skill: Skill, segment_text: str, reward: float) -> str:
    return Template(template).substitute(
        skill=render_skill_text(skill),
        trajectory=segment_text,
        reward=repr(reward),
    )


def render_evolver(template: str, skill: Skill, update_text: str) -> str:
    return Template(template).substitute(
        skill=render_skill_text(skill),
        update=update_text,
    )


def render_summarizer(template: str, trajectory_text: str, reward: float) -> str:
    return Template(template).substitute(
        trajectory=trajectory_text,
        reward=repr(reward),
    )


def render_evolver_no_sg(template: str, skill: Skill, summaries_text: str) -> str:
    return Template(template).substitute(
        skill=render_skill_text(skill),
        summaries=summaries_text,
    )
