"""Waypoint demonstrators and demonstration-bundle generation.

The controller is a pure function of the current scene: approach the task's
disc, grasp, carry to the goal region, release. Additive seeded action noise
turns it into a source of both diverse successful demos and genuine failures
(the raw material for the failure-observation set).
"""

from __future__ import annotations

import numpy as np

from ..core import (
    DatasetBundle,
    FailureObservation,
    Observation,
    TaskSpec,
    Trajectory,
    Transition,
)
from . import layout
from .env import TabletopEnv

__all__ = ["scripted_action", "scripted_demo", "generate_bundle", "initial_state_for_task"]

_REACH_EPS_FRACTION = 0.5  # close once within this fraction of the grasp radius
_BIN_MARGIN = 0.05  # release once the disc is this far inside the bin edges
_CARRY_SPEED = 0.55  # deliberate slow-down while holding the disc
_DROP_EPS = 0.06  # backward carries release within this distance of the drop point


def _toward(env: TabletopEnv, target: np.ndarray, close: bool, speed: float = 1.0) -> np.ndarray:
    delta = (target - env.state.gripper_pos) / env.config.action_scale
    return np.array(
        [np.clip(delta[0], -speed, speed), np.clip(delta[1], -speed, speed), 1.0 if close else -1.0]
    )


def scripted_action(env: TabletopEnv, task: TaskSpec, drop_point: np.ndarray) -> np.ndarray:
    """One step of the waypoint policy for ``task`` at the current state.

    ``drop_point`` is where a backward-task carry releases the disc; forward
    tasks ignore it. Carries run below full speed, so demonstrations are
    deliberately suboptimal in duration.
    """
    state = env.state
    obj = state.object_by_id(0)
    reach = env.config.grasp_radius * _REACH_EPS_FRACTION
    if task.is_forward:
        goal_bin = state.bins[env.catalog.bin_id[task.task_id]]
        x0, y0, x1, y1 = goal_bin.rect
        inner = (x0 + _BIN_MARGIN, y0 + _BIN_MARGIN, x1 - _BIN_MARGIN, y1 - _BIN_MARGIN)
        at_goal = inner[0] <= obj.pos[0] <= inner[2] and inner[1] <= obj.pos[1] <= inner[3]
        done = at_goal
        carry_target = goal_bin.center
    else:
        outside_bins = not any(b.contains(obj.pos) for b in state.bins)
        at_goal = outside_bins and np.linalg.norm(obj.pos - drop_point) <= _DROP_EPS
        done = outside_bins  # the oracle is already satisfied once outside
        carry_target = drop_point
    if obj.held:
        if at_goal:
            return np.array([0.0, 0.0, -1.0])  # release
        return _toward(env, carry_target, close=True, speed=_CARRY_SPEED)
    if done:
        return np.array([0.0, 0.0, -1.0])  # idle open
    # approach and grasp: only close when the task disc is the nearest free one
    dist = np.linalg.norm(obj.pos - state.gripper_pos)
    if dist <= reach and _nearest_free_is(env, obj.object_id):
        return np.array([0.0, 0.0, 1.0])
    return _toward(env, obj.pos, close=False)


def _nearest_free_is(env: TabletopEnv, object_id: int) -> bool:
    state = env.state
    free = [o for o in state.objects if not o.held]
    if not free:
        return False
    dists = [np.linalg.norm(o.pos - state.gripper_pos) for o in free]
    return free[int(np.argmin(dists))].object_id == object_id


def _run_to_forward_success(env: TabletopEnv, forward: TaskSpec) -> None:
    # noiseless pre-roll used to realize a backward-task start state
    drop = np.zeros(2)
    for _ in range(4 * env.config.episode_horizon):
        env.step(scripted_action(env, forward, drop))
        if env.oracle_success(forward):
            return
    raise RuntimeError("noiseless forward controller failed to reach success")


def initial_state_for_task(env: TabletopEnv, task: TaskSpec, seed: int) -> Observation:
    """Reset ``env`` into the initial distribution of ``task``.

    Forward tasks reset normally. Backward tasks reset, complete the forward
    task with the noiseless controller (the disc ends up in its bin), then
    start a fresh episode from there.
    """
    obs = env.reset(seed, task.task_id)
    if not task.is_forward:
        forward = env.catalog.spec(task.paired_task_id)
        _run_to_forward_success(env, forward)
        env.begin_episode()
        obs = env.observe()
    return obs


def scripted_demo(
    env: TabletopEnv, task: TaskSpec, noise_scale: float, seed: int
) -> Trajectory:
    """Roll out the noisy waypoint controller on ``task`` from a seeded reset.

    The episode ends at the first oracle success (terminal) or at the horizon
    (timeout); the trajectory's success flag is the oracle verdict at its
    final state. Failed noisy demos are returned as-is for the caller to
    filter or harvest.
    """
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    obs = initial_state_for_task(env, task, seed)
    noise_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    x0, y0, x1, y1 = layout.SPAWN_REGION
    margin = 0.08
    drop_point = noise_rng.uniform((x0 + margin, y0 + margin), (x1 - margin, y1 - margin))
    transitions: list[Transition] = []
    success = False
    for _ in range(env.config.episode_horizon):
        action = scripted_action(env, task, drop_point)
        if noise_scale > 0:
            action = np.clip(action + noise_rng.normal(0.0, noise_scale, size=3), -1.0, 1.0)
        next_obs, flags = env.step(action)
        success = env.oracle_success(task)
        done = success or flags["horizon"]
        transitions.append(
            Transition(
                obs=obs,
                action=action.astype(np.float32),
                next_obs=next_obs,
                reward=1.0 if success else 0.0,
                terminal=success,
                timeout=bool(flags["horizon"]) and not success,
                task_id=task.task_id,
                mc_return=None,
            )
        )
        obs = next_obs
        if done:
            break
    return Trajectory(transitions=tuple(transitions), task_id=task.task_id, success=success)


def _collect_successes(
    env: TabletopEnv, task: TaskSpec, count: int, noise: float, seed_seq: np.random.SeedSequence
) -> list[Trajectory]:
    demos: list[Trajectory] = []
    seeds = iter(s.generate_state(1)[0] % (2**31) for s in seed_seq.spawn(64 * count))
    while len(demos) < count:
        try:
            demo_seed = int(next(seeds))
        except StopIteration:
            raise RuntimeError(
                f"could not collect {count} successful demos for task {task.task_id}; "
                f"noise {noise} may be too high"
            ) from None
        traj = scripted_demo(env, task, noise, demo_seed)
        if traj.success:
            demos.append(traj)
    return demos


def generate_bundle(
    env: TabletopEnv,
    counts: dict[str, int],
    seed: int,
) -> DatasetBundle:
    """Generate a full demonstration bundle deterministically from ``seed``.

    ``counts`` keys: ``prior_per_task``, ``forward``, ``backward``,
    ``failures``. Prior and target demos are successful noisy rollouts;
    failure observations come from the final segments of failed high-noise
    rollouts on the target pair.
    """
    for key in ("prior_per_task", "forward", "backward", "failures"):
        if counts.get(key, 0) <= 0:
            raise ValueError(f"count {key!r} must be positive")
    catalog = env.catalog
    noise = env.config.demo_noise
    root = np.random.SeedSequence(entropy=seed)
    prior_seq, fwd_seq, bwd_seq, fail_seq = root.spawn(4)

    prior: list[Trajectory] = []
    for task_id in catalog.prior_forward_ids:
        task = catalog.spec(task_id)
        prior.extend(
            _collect_successes(env, task, counts["prior_per_task"], noise, prior_seq.spawn(1)[0])
        )
    fwd_task = catalog.spec(catalog.target_forward_id)
    bwd_task = catalog.spec(catalog.target_backward_id)
    forward = _collect_successes(env, fwd_task, counts["forward"], noise, fwd_seq)
    backward = _collect_successes(env, bwd_task, counts["backward"], noise, bwd_seq)

    failures: list[FailureObservation] = []
    fail_noise = env.config.failure_noise
    seeds = iter(s.generate_state(1)[0] % (2**31) for s in fail_seq.spawn(2048))
    which = 0
    while len(failures) < counts["failures"]:
        task = fwd_task if which % 2 == 0 else bwd_task
        which += 1
        traj = scripted_demo(env, task, fail_noise, int(next(seeds)))
        if traj.success:
            continue
        tail = traj.transitions[-3:]
        for tr in tail:
            if len(failures) < counts["failures"]:
                failures.append(FailureObservation(obs=tr.next_obs, task_id=task.task_id))
    return DatasetBundle(
        tasks=catalog.tasks,
        prior=tuple(prior),
        target_forward=tuple(forward),
        target_backward=tuple(backward),
        failures=tuple(failures),
    )
