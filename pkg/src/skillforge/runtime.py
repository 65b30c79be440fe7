"""The skill-conditioned episode loop.

A skill is selected only when none is active; while one is active, every
action is sampled conditioned on it, and after each environment transition a
termination check decides whether control returns to the selector. Episode
end always hands control back, so every maximal run of steps under one skill
opens with a selection event and closes with a termination flag.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Protocol

from . import prompts
from .backends import PolicyBackend, TerminationBackend
from .errors import EpisodeError, ProtocolError, SelectionError, SkillForgeError, ValidationError
from .similarity import SimilarityFn, jaccard_similarity
from .skills import Skill, SkillPool, online_score
from .trajectory import EnvState, Step, Trajectory

Selector = Callable[[EnvState, SkillPool], Skill]
ValueEstimator = Callable[[EnvState, Skill], float]


class EnvFactory(Protocol):
    def __call__(self): ...


def select_skill_similarity(
    state: EnvState, pool: SkillPool, sim: SimilarityFn = jaccard_similarity
) -> Skill:
    """Skill whose activation condition best matches the state; ties go to the
    lowest skill id."""
    if not pool.skills:
        raise SelectionError("cannot select from an empty pool")
    return max(pool.skills, key=lambda s: (sim(state.text, s.initiation), -s.id))


def select_skill_value(
    state: EnvState,
    pool: SkillPool,
    sim: SimilarityFn = jaccard_similarity,
    k: int = 3,
    q: ValueEstimator | None = None,
) -> Skill:
    """Two-stage selection: top-k by similarity, then highest estimated value.

    The default value estimate is the skill's online score, the only return
    statistic the system maintains.
    """
    if not pool.skills:
        raise SelectionError("cannot select from an empty pool")
    if k < 1:
        raise ValidationError("top-k must be >= 1")
    if q is None:
        q = lambda _state, skill: online_score(skill)
    ranked = sorted(pool.skills, key=lambda s: (-sim(state.text, s.initiation), s.id))
    candidates = ranked[: min(k, len(ranked))]
    return max(candidates, key=lambda s: (q(state, s), -s.id))


def similarity_selector(sim: SimilarityFn = jaccard_similarity) -> Selector:
    return lambda state, pool: select_skill_similarity(state, pool, sim)


def value_selector(
    sim: SimilarityFn = jaccard_similarity, k: int = 3, q: ValueEstimator | None = None
) -> Selector:
    return lambda state, pool: select_skill_value(state, pool, sim, k, q)


def check_termination(state: EnvState, skill: Skill, judge: TerminationBackend) -> str:
    """DONE when the skill should hand control back, CONTINUE otherwise.

    Episode end forces DONE without consulting the judge, and an unparseable
    judge reply fails safe to DONE (handing control back is the conservative
    recovery).
    """
    if state.terminal:
        return "DONE"
    try:
        return judge.judge(state, skill)
    except ProtocolError:
        return "DONE"


def run_episode(
    env,
    pool: SkillPool,
    policy: PolicyBackend,
    judge: TerminationBackend,
    selector: Selector,
    max_steps: int,
    *,
    episode_id: str = "",
    seed: int | None = None,
    record_prompts: bool = False,
    decision_template: str | None = None,
) -> Trajectory:
    """Roll one episode under the skill-conditioned policy.

    The selector is consulted at the first step and after every termination;
    the policy is never queried without an active skill. Environment pushback
    (invalid moves) is ordinary in-band feedback, not an error; only backend
    failures abort, carrying the partial step list.
    """
    if max_steps < 1:
        raise ValidationError("max_steps must be >= 1")
    if not pool.skills:
        raise SelectionError("cannot roll an episode with an empty pool")
    template = decision_template
    if record_prompts and template is None:
        template = prompts.PromptSet.default().decision

    state = env.reset(seed)
    steps: list[Step] = []
    active: Skill | None = None
    started = False
    while len(steps) < max_steps and not state.terminal:
        if active is None:
            active = selector(state, pool)
            started = True
        try:
            sample = policy.sample_action(state, active)
        except SkillForgeError as exc:
            raise EpisodeError(
                f"policy backend failed at step {len(steps)}: {exc}", partial_steps=steps
            ) from exc
        next_state, reward, terminal = env.step(sample.action)
        prompt = None
        if record_prompts:
            prompt = sample.prompt or prompts.render_decision(template, state, active)
        decision = check_termination(next_state, active, judge)
        steps.append(
            Step(
                state=state,
                skill_id=active.id,
                action=sample.action,
                behavior_logprob=sample.logprob,
                reward=reward,
                skill_started=started,
                skill_terminated=decision == "DONE",
                prompt=prompt,
            )
        )
        started = False
        if decision == "DONE":
            active = None
        state = next_state

    if steps and not steps[-1].skill_terminated:
        # max_steps cut the episode; control hands back regardless.
        last = steps[-1]
        steps[-1] = Step(
            state=last.state,
            skill_id=last.skill_id,
            action=last.action,
            behavior_logprob=last.behavior_logprob,
            reward=last.reward,
            skill_started=last.skill_started,
            skill_terminated=True,
            prompt=last.prompt,
        )
    return Trajectory(
        episode_id=episode_id,
        steps=tuple(steps),
        total_return=sum(s.reward for s in steps),
        env_name=getattr(env, "name", ""),
        backend_name=getattr(policy, "name", ""),
    )


def episode_seed(seed: int, index: int) -> int:
    """Deterministic per-episode seed derived from (run seed, episode index)."""
    return seed * 1_000_003 + index


def collect_batch(
    env_factory: EnvFactory,
    pool: SkillPool,
    policy: PolicyBackend,
    judge: TerminationBackend,
    batch_size: int,
    seed: int,
    *,
    selector: Selector | None = None,
    max_steps: int = 20,
    record_prompts: bool = False,
    parallelism: int = 1,
) -> list[Trajectory]:
    """Collect a batch of episodes, each on a fresh env instance.

    The pool is a read-only snapshot for the whole batch. Episodes may run on
    worker threads; results keep episode-index order either way.
    """
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    chosen = selector or similarity_selector()

    def run(index: int) -> Trajectory:
        env = env_factory()
        try:
            return run_episode(
                env,
                pool,
                policy,
                judge,
                chosen,
                max_steps,
                episode_id=f"ep{seed}_{index:04d}",
                seed=episode_seed(seed, index),
                record_prompts=record_prompts,
            )
        except EpisodeError as exc:
            exc.episode_index = index
            raise

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool_exec:
            return list(pool_exec.map(run, range(batch_size)))
    return [run(i) for i in range(batch_size)]
