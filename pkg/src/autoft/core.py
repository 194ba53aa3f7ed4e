"""Core experience types shared by the simulator, agent, reward models and loop.

All types are immutable value records: construct once, never mutate. Numeric
payloads are float32 numpy arrays so that on-disk round trips are bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "Observation",
    "TaskSpec",
    "Transition",
    "Trajectory",
    "FailureObservation",
    "DatasetBundle",
    "compute_mc_returns",
    "validate_trajectory",
    "validate_task_pairing",
]


@dataclass(frozen=True)
class Observation:
    """A single sensor reading.

    ``image`` is an HxWx3 float32 array with values in [0, 1], or ``None``
    when the run is configured for low-dimensional (state) observations.
    ``proprio`` always holds the low-dimensional part: in image mode the
    end-effector pose (x, y, gripper aperture), in state mode the full
    flattened scene state.
    """

    image: np.ndarray | None
    proprio: np.ndarray

    def __post_init__(self):
        if self.image is not None:
            img = np.asarray(self.image, dtype=np.float32)
            if img.ndim != 3 or img.shape[2] != 3:
                raise ValueError(f"image must be HxWx3, got shape {img.shape}")
            if img.size and (img.min() < 0.0 or img.max() > 1.0):
                raise ValueError("image values must lie in [0, 1]")
            object.__setattr__(self, "image", img)
        prop = np.asarray(self.proprio, dtype=np.float32)
        if prop.ndim != 1:
            raise ValueError(f"proprio must be a flat vector, got shape {prop.shape}")
        if not np.all(np.isfinite(prop)):
            raise ValueError("proprio must be finite")
        object.__setattr__(self, "proprio", prop)

    def allclose(self, other: "Observation", atol: float = 0.0) -> bool:
        if (self.image is None) != (other.image is None):
            return False
        if self.image is not None and not np.allclose(self.image, other.image, atol=atol):
            return False
        return np.allclose(self.proprio, other.proprio, atol=atol)


@dataclass(frozen=True)
class TaskSpec:
    """One task of a forward/backward pair, plus its language handles.

    ``paired_task_id`` points from a target task to the task that undoes it
    (and vice versa). ``prompt_question`` is the yes/no question handed to a
    success detector; it may be filled in lazily from ``name``.
    """

    task_id: int
    name: str
    instruction: str
    paired_task_id: int
    is_forward: bool
    prompt_question: str = ""

    def __post_init__(self):
        if not self.instruction:
            raise ValueError("task instruction must be nonempty")


def validate_task_pairing(tasks: Sequence[TaskSpec]) -> None:
    """Check the pairing is symmetric and that ids are unique."""
    by_id = {t.task_id: t for t in tasks}
    if len(by_id) != len(tasks):
        raise ValueError("duplicate task ids")
    for t in tasks:
        mate = by_id.get(t.paired_task_id)
        if mate is None:
            raise ValueError(f"task {t.task_id} pairs with unknown task {t.paired_task_id}")
        if mate.paired_task_id != t.task_id:
            raise ValueError(f"pairing not symmetric for tasks {t.task_id}/{mate.task_id}")
        if mate.task_id != t.task_id and mate.is_forward == t.is_forward:
            raise ValueError(f"paired tasks {t.task_id}/{mate.task_id} must face opposite directions")


@dataclass(frozen=True)
class Transition:
    """One environment step (s, a, s') with its sparse reward and flags.

    ``terminal`` marks an episode ended by success (no bootstrapping past it);
    ``timeout`` marks an episode cut by the horizon or a task switch
    (bootstrapping continues through it). ``mc_return`` is the discounted
    return observed from this step onwards; ``None`` until computed.
    """

    obs: Observation
    action: np.ndarray
    next_obs: Observation
    reward: float
    terminal: bool
    timeout: bool
    task_id: int
    mc_return: float | None = None

    def __post_init__(self):
        act = np.asarray(self.action, dtype=np.float32)
        if act.ndim != 1:
            raise ValueError("action must be a flat vector")
        if act.size and (act.min() < -1.0 or act.max() > 1.0):
            raise ValueError("action components must lie in [-1, 1]")
        object.__setattr__(self, "action", act)
        if self.terminal and self.timeout:
            raise ValueError("terminal and timeout cannot both be set")


@dataclass(frozen=True)
class Trajectory:
    """An ordered run of transitions from one episode of one task."""

    transitions: tuple[Transition, ...]
    task_id: int
    success: bool

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(self.transitions))

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions], dtype=np.float64)

    @property
    def mc_returns(self) -> np.ndarray:
        return np.array(
            [np.nan if t.mc_return is None else t.mc_return for t in self.transitions],
            dtype=np.float64,
        )


def validate_trajectory(traj: Trajectory) -> None:
    """Enforce the chaining and flag invariants of a stored trajectory."""
    if not traj.transitions:
        raise ValueError("trajectory must be nonempty")
    for i, tr in enumerate(traj.transitions):
        if tr.task_id != traj.task_id:
            raise ValueError(f"transition {i} has task {tr.task_id}, trajectory has {traj.task_id}")
        last = i == len(traj.transitions) - 1
        if not last:
            if tr.terminal or tr.timeout:
                raise ValueError(f"transition {i} carries an episode-end flag mid-trajectory")
            nxt = traj.transitions[i + 1]
            if not tr.next_obs.allclose(nxt.obs):
                raise ValueError(f"transitions {i} and {i + 1} do not chain")


@dataclass(frozen=True)
class FailureObservation:
    """A single observation known to show an unsuccessful state of a task."""

    obs: Observation
    task_id: int


@dataclass(frozen=True)
class DatasetBundle:
    """All demonstration data one run starts from.

    ``prior`` holds multi-task demonstrations across the prior tasks;
    ``target_forward``/``target_backward`` hold the target pair's demos;
    ``failures`` hold image-only unsuccessful states used by reward training.
    ``tasks`` is the full task table the trajectories refer to.
    """

    tasks: tuple[TaskSpec, ...]
    prior: tuple[Trajectory, ...]
    target_forward: tuple[Trajectory, ...]
    target_backward: tuple[Trajectory, ...]
    failures: tuple[FailureObservation, ...]

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "prior", tuple(self.prior))
        object.__setattr__(self, "target_forward", tuple(self.target_forward))
        object.__setattr__(self, "target_backward", tuple(self.target_backward))
        object.__setattr__(self, "failures", tuple(self.failures))
        validate_task_pairing(self.tasks)
        by_id = {t.task_id: t for t in self.tasks}
        for traj in self.prior + self.target_forward + self.target_backward:
            validate_trajectory(traj)
            if traj.task_id not in by_id:
                raise ValueError(f"trajectory refers to unknown task {traj.task_id}")
        if self.target_forward and self.target_backward:
            f_id = self.target_forward[0].task_id
            b_id = self.target_backward[0].task_id
            if by_id[f_id].paired_task_id != b_id:
                raise ValueError("target forward/backward trajectories are not a valid pair")

    @property
    def demonstrations(self) -> tuple[Trajectory, ...]:
        return self.prior + self.target_forward + self.target_backward

    def counts(self) -> dict[str, int]:
        return {
            "prior": len(self.prior),
            "target_forward": len(self.target_forward),
            "target_backward": len(self.target_backward),
            "failures": len(self.failures),
        }


def compute_mc_returns(traj: Trajectory, gamma: float) -> Trajectory:
    """Return a copy of ``traj`` with discounted Monte-Carlo returns filled in.

    The return at step t is sum_k gamma^k * r_{t+k} over the remainder of the
    trajectory. For episodes cut by a timeout the unseen future is treated as
    zero reward, which under nonnegative rewards is a valid lower bound on the
    true return.
    """
    if not traj.transitions:
        raise ValueError("cannot compute returns of an empty trajectory")
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    acc = 0.0
    out: list[Transition] = []
    for tr in reversed(traj.transitions):
        acc = tr.reward + gamma * acc
        out.append(replace(tr, mc_return=acc))
    out.reverse()
    return Trajectory(transitions=tuple(out), task_id=traj.task_id, success=traj.success)
