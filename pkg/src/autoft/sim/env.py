"""Deterministic 2D kinematic tabletop environment.

A point gripper moves on the unit square, grasps colored discs and drops them
into bins. There are no contact dynamics: a held disc rides with the gripper,
everything else stays put. Given a seed and an action sequence every
observation is reproducible bit-for-bit.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..core import Observation, TaskSpec
from . import layout
from .layout import TaskCatalog

__all__ = ["SimConfig", "ObjectState", "BinSpec", "SimState", "TabletopEnv"]

ACTION_DIM = 3  # dx, dy, gripper command


@dataclass(frozen=True)
class SimConfig:
    """Environment family knobs.

    ``observation_mode`` selects rendered images plus 3-d proprioception
    (``"image"``) or a flat scene vector (``"state"``). The 40-step default
    horizon makes 25 episodes fit in a 1000-step reset interval.
    """

    episode_horizon: int = 40
    image_size: int = 48
    n_prior_tasks: int = 20
    n_distractors: int = 0
    grasp_radius: float = 0.05
    action_scale: float = 0.05
    observation_mode: str = "image"
    max_object_slots: int = 4
    min_object_separation: float = 0.10
    demo_noise: float = 0.1
    failure_noise: float = 0.8

    def __post_init__(self):
        if self.episode_horizon < 1:
            raise ValueError("episode_horizon must be >= 1")
        if self.grasp_radius <= 0:
            raise ValueError("grasp_radius must be positive")
        if self.observation_mode not in ("image", "state"):
            raise ValueError(f"unknown observation_mode {self.observation_mode!r}")
        if self.n_distractors > self.max_object_slots - 1:
            raise ValueError("n_distractors exceeds available object slots")

    @property
    def proprio_dim(self) -> int:
        if self.observation_mode == "image":
            return 3
        return 3 + 4 * self.max_object_slots

    @property
    def image_shape(self) -> tuple[int, int, int] | None:
        if self.observation_mode == "image":
            return (self.image_size, self.image_size, 3)
        return None


@dataclass
class ObjectState:
    object_id: int
    color_code: int
    pos: np.ndarray  # (2,) float64
    held: bool = False
    is_distractor: bool = False


@dataclass(frozen=True)
class BinSpec:
    bin_id: int
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1

    def contains(self, pos: np.ndarray) -> bool:
        x0, y0, x1, y1 = self.rect
        return bool(x0 <= pos[0] <= x1 and y0 <= pos[1] <= y1)

    @property
    def center(self) -> np.ndarray:
        x0, y0, x1, y1 = self.rect
        return np.array([(x0 + x1) / 2.0, (y0 + y1) / 2.0])


@dataclass
class SimState:
    """Full mutable simulator state; snapshots are deep copies."""

    gripper_pos: np.ndarray
    gripper_closed: bool
    objects: list[ObjectState]
    bins: tuple[BinSpec, ...]
    step_count: int
    active_task_id: int
    rng_state: dict = field(default_factory=dict)

    def object_by_id(self, object_id: int) -> ObjectState:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise ValueError(f"no object with id {object_id}")

    def held_object(self) -> ObjectState | None:
        for o in self.objects:
            if o.held:
                return o
        return None


class TabletopEnv:
    """One single-threaded environment instance bound to a task catalog."""

    def __init__(self, config: SimConfig, catalog: TaskCatalog):
        self.config = config
        self.catalog = catalog
        self.bins = tuple(
            BinSpec(bin_id=i, rect=rect) for i, rect in enumerate(layout.BIN_RECTS)
        )
        self._rng = np.random.default_rng(0)
        self._state: SimState | None = None

    # ------------------------------------------------------------------ state

    @property
    def state(self) -> SimState:
        if self._state is None:
            raise RuntimeError("environment must be reset before use")
        return self._state

    def snapshot(self) -> SimState:
        snap = copy.deepcopy(self.state)
        snap.rng_state = self._rng.bit_generator.state
        return snap

    def restore(self, snap: SimState) -> None:
        self._state = copy.deepcopy(snap)
        if snap.rng_state:
            self._rng.bit_generator.state = snap.rng_state

    # ------------------------------------------------------------------ reset

    def reset(self, seed: int, task_id: int | None = None) -> Observation:
        """Start a fresh scene for ``task_id``'s pair with seeded placement.

        Objects land at non-overlapping random positions in the spawn region
        (outside every bin); the gripper starts open at its home pose.
        """
        if task_id is None:
            task_id = self.catalog.target_forward_id
        task = self.catalog.spec(task_id)  # raises on unknown id
        self._rng = np.random.default_rng(seed)
        objects = []
        positions: list[np.ndarray] = []
        codes = [self.catalog.object_code[task.task_id]]
        for k in range(self.config.n_distractors):
            codes.append(
                layout.DISTRACTOR_COLOR_CODES[k % len(layout.DISTRACTOR_COLOR_CODES)]
            )
        for object_id, code in enumerate(codes):
            pos = self._sample_spawn_position(positions)
            positions.append(pos)
            objects.append(
                ObjectState(
                    object_id=object_id,
                    color_code=code,
                    pos=pos,
                    held=False,
                    is_distractor=object_id > 0,
                )
            )
        self._state = SimState(
            gripper_pos=np.array(layout.GRIPPER_HOME, dtype=np.float64),
            gripper_closed=False,
            objects=objects,
            bins=self.bins,
            step_count=0,
            active_task_id=task.task_id,
        )
        return self.observe()

    def _sample_spawn_position(self, taken: list[np.ndarray]) -> np.ndarray:
        x0, y0, x1, y1 = layout.SPAWN_REGION
        for _ in range(400):
            pos = self._rng.uniform((x0, y0), (x1, y1))
            if all(
                np.linalg.norm(pos - p) >= self.config.min_object_separation for p in taken
            ):
                return pos
        raise RuntimeError("could not place objects without overlap")

    def begin_episode(self) -> None:
        """Zero the step counter without touching the scene (task switch)."""
        self.state.step_count = 0

    # ------------------------------------------------------------------- step

    def step(self, action: np.ndarray) -> tuple[Observation, dict]:
        """Apply one clipped displacement + gripper command.

        A positive gripper command closes the gripper; while closed and empty
        it grasps the nearest free object within ``grasp_radius``. A
        non-positive command opens it, releasing anything held.
        """
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (ACTION_DIM,):
            raise ValueError(f"action must have shape ({ACTION_DIM},), got {action.shape}")
        state = self.state
        action = np.clip(action, -1.0, 1.0)
        state.gripper_pos = np.clip(
            state.gripper_pos + action[:2] * self.config.action_scale, 0.0, 1.0
        )
        closing = action[2] > 0.0
        if closing:
            state.gripper_closed = True
            if state.held_object() is None:
                free = [o for o in state.objects if not o.held]
                if free:
                    dists = [np.linalg.norm(o.pos - state.gripper_pos) for o in free]
                    nearest = free[int(np.argmin(dists))]
                    if min(dists) <= self.config.grasp_radius:
                        nearest.held = True
        else:
            state.gripper_closed = False
            held = state.held_object()
            if held is not None:
                held.held = False
        held = state.held_object()
        if held is not None:
            held.pos = state.gripper_pos.copy()
        state.step_count += 1
        flags = {"horizon": state.step_count >= self.config.episode_horizon}
        return self.observe(), flags

    # ------------------------------------------------------------- observation

    def observe(self) -> Observation:
        if self.config.observation_mode == "image":
            return Observation(image=self.render(), proprio=self._proprio())
        return Observation(image=None, proprio=self._state_vector())

    def _proprio(self) -> np.ndarray:
        state = self.state
        return np.array(
            [state.gripper_pos[0], state.gripper_pos[1], 1.0 if state.gripper_closed else 0.0],
            dtype=np.float32,
        )

    def _state_vector(self) -> np.ndarray:
        state = self.state
        vec = np.zeros(self.config.proprio_dim, dtype=np.float32)
        vec[0:3] = self._proprio()
        n_codes = len(layout.PALETTE)
        for slot, obj in enumerate(sorted(state.objects, key=lambda o: o.object_id)):
            if slot >= self.config.max_object_slots:
                break
            base = 3 + 4 * slot
            vec[base + 0] = obj.pos[0]
            vec[base + 1] = obj.pos[1]
            vec[base + 2] = 1.0 if obj.held else 0.0
            vec[base + 3] = (obj.color_code + 1) / n_codes
        return vec

    def render(self, state: SimState | None = None) -> np.ndarray:
        """Draw the scene as an SxSx3 float32 image in [0, 1]."""
        state = state or self.state
        size = self.config.image_size
        img = np.full((size, size, 3), 0.08, dtype=np.float32)
        for b in state.bins:
            r0, c0 = self._to_pixel((b.rect[0], b.rect[3]), size)
            r1, c1 = self._to_pixel((b.rect[2], b.rect[1]), size)
            tint = (0.16, 0.20, 0.42) if b.bin_id == 0 else (0.42, 0.18, 0.16)
            img[r0 : r1 + 1, c0 : c1 + 1] = tint
        rows, cols = np.mgrid[0:size, 0:size]
        radius = max(2.0, 0.05 * size)
        for obj in sorted(state.objects, key=lambda o: -o.object_id):
            r, c = self._to_pixel(obj.pos, size)
            mask = (rows - r) ** 2 + (cols - c) ** 2 <= radius**2
            img[mask] = layout.color_rgb(obj.color_code)
        gr, gc = self._to_pixel(state.gripper_pos, size)
        half = 2
        r0, r1 = max(0, gr - half), min(size - 1, gr + half)
        c0, c1 = max(0, gc - half), min(size - 1, gc + half)
        if state.gripper_closed:
            img[r0 : r1 + 1, c0 : c1 + 1, :] = np.maximum(
                img[r0 : r1 + 1, c0 : c1 + 1, :], 0.85
            )
        else:
            img[r0 : r1 + 1, [c0, c1], :] = 0.95
            img[[r0, r1], c0 : c1 + 1, :] = 0.95
        return img

    @staticmethod
    def _to_pixel(pos, size: int) -> tuple[int, int]:
        col = int(round(float(pos[0]) * (size - 1)))
        row = (size - 1) - int(round(float(pos[1]) * (size - 1)))
        return min(max(row, 0), size - 1), min(max(col, 0), size - 1)

    # ---------------------------------------------------------------- success

    def oracle_success(self, task: TaskSpec | int, state: SimState | None = None) -> bool:
        """Ground-truth success check for a task at the given (or current) state.

        Forward: the task's disc lies inside its bin and is not held.
        Backward: the disc lies outside every bin and is not held, i.e. it is
        back in the support of the forward task's initial distribution.
        """
        if isinstance(task, int):
            task = self.catalog.spec(task)
        elif all(task.task_id != t.task_id for t in self.catalog.tasks):
            raise ValueError(f"unknown task id {task.task_id}")
        state = state or self.state
        obj = state.object_by_id(0)
        if obj.held:
            return False
        if task.is_forward:
            target_bin = state.bins[self.catalog.bin_id[task.task_id]]
            return target_bin.contains(obj.pos)
        return not any(b.contains(obj.pos) for b in state.bins)

    # ------------------------------------------------------------- checkpoint

    def to_state_dict(self) -> dict:
        snap = self.snapshot()
        return {
            "gripper_pos": [float(v) for v in snap.gripper_pos],
            "gripper_closed": snap.gripper_closed,
            "step_count": snap.step_count,
            "active_task_id": snap.active_task_id,
            "rng_state": snap.rng_state,
            "objects": [
                {
                    "object_id": o.object_id,
                    "color_code": o.color_code,
                    "pos": [float(v) for v in o.pos],
                    "held": o.held,
                    "is_distractor": o.is_distractor,
                }
                for o in snap.objects
            ],
        }

    def from_state_dict(self, data: dict) -> None:
        objects = [
            ObjectState(
                object_id=o["object_id"],
                color_code=o["color_code"],
                pos=np.array(o["pos"], dtype=np.float64),
                held=o["held"],
                is_distractor=o["is_distractor"],
            )
            for o in data["objects"]
        ]
        self._state = SimState(
            gripper_pos=np.array(data["gripper_pos"], dtype=np.float64),
            gripper_closed=data["gripper_closed"],
            objects=objects,
            bins=self.bins,
            step_count=data["step_count"],
            active_task_id=data["active_task_id"],
        )
        if data.get("rng_state"):
            self._rng.bit_generator.state = data["rng_state"]
