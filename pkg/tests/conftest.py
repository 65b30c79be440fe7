from __future__ import annotations

import pytest

from skillforge.envs import LineWorldConfig, LineWorldEnv
from skillforge.evolution import EvolutionBackends, EvolutionParams
from skillforge.gradients import KeywordMajorityAggregator
from skillforge.scripted import (
    CueLineWorldPolicy,
    ScriptedEvolver,
    ScriptedSummarizer,
    StaticJudge,
    lineworld_doctor,
)
from skillforge.skills import Skill, SkillPool, new_skill


@pytest.fixture
def opener_skill() -> Skill:
    return new_skill(
        "StrategicPlanning",
        initiation="At the very beginning of the game when no feedback exists.",
        policy_steps=(
            "Establish an initial hypothesis space based on the task constraints.",
            "Generate a diverse exploratory action that maximally reduces uncertainty.",
        ),
        termination="Terminate after the first exploratory action is executed and feedback is observed.",
        skill_id=1,
    )


@pytest.fixture
def explorer_skill() -> Skill:
    return new_skill(
        "Explorer",
        initiation="When exploring an unfamiliar place without prior feedback.",
        policy_steps=("Survey the surroundings.", "Try a cautious move."),
        termination="Stop after one cautious move was made.",
        skill_id=1,
    )


@pytest.fixture
def small_pool(opener_skill) -> SkillPool:
    second = new_skill(
        "FeedbackInference",
        initiation="When feedback from earlier guesses is available.",
        policy_steps=("Infer constraints from all feedback.", "Guess consistently."),
        termination="Stop when the episode ends.",
        skill_id=2,
    )
    return SkillPool(skills=(opener_skill, second), capacity=8)


@pytest.fixture
def lineworld_bundle(explorer_skill):
    """The scripted demonstration fixture: a cue-conditioned policy on the
    varying-start line walk, with the matching doctor/evolver wiring."""
    config = LineWorldConfig(length=4, vary_start_with_seed=True)
    pool = SkillPool(skills=(explorer_skill,), capacity=16)
    backends = EvolutionBackends(
        policy=CueLineWorldPolicy(),
        doctor=lineworld_doctor(),
        aggregator=KeywordMajorityAggregator(),
        evolver=ScriptedEvolver(),
        summarizer=ScriptedSummarizer(),
    )
    return {
        "env_factory": lambda: LineWorldEnv(config),
        "pool": pool,
        "backends": backends,
        "judge": StaticJudge("CONTINUE"),
        "params": EvolutionParams(),
    }
