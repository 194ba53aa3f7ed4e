"""Deterministic-policy evaluation rollouts with oracle judgment."""

from __future__ import annotations

from dataclasses import dataclass

from ..core import TaskSpec
from ..sim.env import TabletopEnv
from ..sim.scripted import initial_state_for_task

__all__ = ["EvalResult", "evaluate_policy", "evaluate_pair"]


@dataclass(frozen=True)
class EvalResult:
    task_id: int
    success_rate: float
    n_trials: int
    episode_lengths: tuple[int, ...]


def evaluate_policy(
    actor,
    env: TabletopEnv,
    task: TaskSpec,
    n_trials: int,
    seed: int,
    horizon: int | None = None,
) -> EvalResult:
    """Fraction of seeded episodes the deterministic policy completes.

    Episodes start in the task's initial distribution, run the squashed-mean
    action, and end at the first oracle success or at the horizon.
    """
    horizon = horizon or env.config.episode_horizon
    successes = 0
    lengths = []
    for trial in range(n_trials):
        obs = initial_state_for_task(env, task, seed + 7013 * trial)
        steps = 0
        done = False
        while steps < horizon and not done:
            action = actor.act(obs, task.task_id, stochastic=False)
            obs, _ = env.step(action)
            steps += 1
            done = env.oracle_success(task)
        successes += int(done)
        lengths.append(steps)
    return EvalResult(
        task_id=task.task_id,
        success_rate=successes / n_trials,
        n_trials=n_trials,
        episode_lengths=tuple(lengths),
    )


def evaluate_pair(
    actor, env: TabletopEnv, n_trials: int, seed: int, horizon: int | None = None
) -> dict[str, EvalResult]:
    """Evaluate both directions of the environment's target pair."""
    forward = env.catalog.spec(env.catalog.target_forward_id)
    backward = env.catalog.spec(env.catalog.target_backward_id)
    return {
        "forward": evaluate_policy(actor, env, forward, n_trials, seed, horizon),
        "backward": evaluate_policy(actor, env, backward, n_trials, seed + 991, horizon),
    }
