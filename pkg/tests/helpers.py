from __future__ import annotations

from skillforge.trajectory import EnvState, Step, Trajectory


def make_state(text: str, step_index: int = 0, terminal: bool = False) -> EnvState:
    return EnvState(text=text, terminal=terminal, step_index=step_index)


def make_trajectory(
    rewards: list[float],
    skill_id: int = 1,
    episode_id: str = "ep0",
    behavior_logprob: float = 0.0,
    segment_breaks: set[int] | None = None,
    prompts: list[str] | None = None,
    env_name: str = "test-env",
    backend_name: str = "test-backend",
) -> Trajectory:
    """Single-skill trajectory unless segment_breaks marks extra selection points."""
    breaks = segment_breaks or set()
    steps = []
    n = len(rewards)
    for i, reward in enumerate(rewards):
        steps.append(
            Step(
                state=make_state(f"state {i} of {episode_id}", step_index=i),
                skill_id=skill_id,
                action=f"act{i}",
                behavior_logprob=behavior_logprob,
                reward=reward,
                skill_started=(i == 0) or (i in breaks),
                skill_terminated=(i == n - 1) or ((i + 1) in breaks),
                prompt=prompts[i] if prompts else None,
            )
        )
    return Trajectory(
        episode_id=episode_id,
        steps=tuple(steps),
        total_return=sum(rewards),
        env_name=env_name,
        backend_name=backend_name,
    )
