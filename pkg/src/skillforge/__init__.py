"""Skill-augmented agent runtime with non-parametric skill evolution.

The package learns reusable procedural skills from interaction trajectories:
episodes run under a skill-conditioned policy, failures become natural-language
update directions, candidates are verified with a clipped-surrogate gate
against historical behavior, and the pool is maintained by online scores.
"""

from .envs import (
    LineWorldConfig,
    LineWorldEnv,
    MastermindConfig,
    MastermindEnv,
    PegFeedback,
    mastermind_consistent_codes,
    mastermind_feedback,
)
from .errors import SkillForgeError
from .evolution import (
    EvolutionBackends,
    EvolutionParams,
    evolve,
    prune,
    prune_fifo,
    skill_gain,
    update_scores,
)
from .gate import (
    GateInput,
    GateReport,
    GateStep,
    advantages,
    clipped_term,
    gate_select,
    return_to_go,
    surrogate,
    update_return_baseline,
)
from .gradients import (
    AggregatedGradient,
    SemanticGradient,
    aggregate_gradients,
    apply_gradient,
    extract_gradient,
    gradient_to_json,
    parse_gradient_json,
    summarize_trajectory,
)
from .metrics import delta_prompt_tokens, retrieval_ratio, reuse_rate, storage_metrics
from .runtime import (
    check_termination,
    collect_batch,
    run_episode,
    select_skill_similarity,
    select_skill_value,
)
from .skills import (
    Skill,
    SkillPool,
    load_pool,
    new_skill,
    online_score,
    render_skill_text,
    save_pool,
)
from .trajectory import EnvState, Step, Trajectory

__version__ = "0.1.0"

__all__ = [
    "AggregatedGradient",
    "EnvState",
    "EvolutionBackends",
    "EvolutionParams",
    "GateInput",
    "GateReport",
    "GateStep",
    "LineWorldConfig",
    "LineWorldEnv",
    "MastermindConfig",
    "MastermindEnv",
    "PegFeedback",
    "SemanticGradient",
    "Skill",
    "SkillForgeError",
    "SkillPool",
    "Step",
    "Trajectory",
    "advantages",
    "aggregate_gradients",
    "apply_gradient",
    "check_termination",
    "clipped_term",
    "collect_batch",
    "delta_prompt_tokens",
    "evolve",
    "extract_gradient",
    "gate_select",
    "gradient_to_json",
    "load_pool",
    "mastermind_consistent_codes",
    "mastermind_feedback",
    "new_skill",
    "online_score",
    "parse_gradient_json",
    "prune",
    "prune_fifo",
    "render_skill_text",
    "retrieval_ratio",
    "return_to_go",
    "reuse_rate",
    "run_episode",
    "save_pool",
    "select_skill_similarity",
    "select_skill_value",
    "skill_gain",
    "storage_metrics",
    "summarize_trajectory",
    "surrogate",
    "update_return_baseline",
    "update_scores",
]
