"""Workspace geometry, color palette and task roster for the tabletop family.

The table is the unit square. Two bins sit along the top edge; objects spawn
in the lower region. Each task pair manipulates one colored disc: the forward
task puts it into its bin, the backward task takes it back out.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import TaskSpec, validate_task_pairing

__all__ = [
    "WORKSPACE_LOW",
    "WORKSPACE_HIGH",
    "BIN_RECTS",
    "BIN_NAMES",
    "SPAWN_REGION",
    "GRIPPER_HOME",
    "PALETTE",
    "TASK_COLOR_NAMES",
    "TARGET_COLOR_NAME",
    "DISTRACTOR_COLOR_NAMES",
    "TaskCatalog",
    "build_catalog",
]

WORKSPACE_LOW = 0.0
WORKSPACE_HIGH = 1.0

# (x0, y0, x1, y1), y grows upward
BIN_RECTS = (
    (0.06, 0.66, 0.40, 0.94),
    (0.60, 0.66, 0.94, 0.94),
)
BIN_NAMES = ("left", "right")

# objects spawn below the bins
SPAWN_REGION = (0.08, 0.08, 0.92, 0.50)
GRIPPER_HOME = (0.5, 0.28)

TASK_COLOR_NAMES = (
    "red", "green", "blue", "yellow", "purple",
    "orange", "cyan", "magenta", "olive", "teal",
)
TARGET_COLOR_NAME = "pink"
DISTRACTOR_COLOR_NAMES = ("gray", "brown", "beige", "slate")

# color code -> (name, rgb); task colors first, then the target color, then
# distractor-only colors
PALETTE: tuple[tuple[str, tuple[float, float, float]], ...] = (
    ("red", (0.90, 0.15, 0.15)),
    ("green", (0.15, 0.75, 0.20)),
    ("blue", (0.20, 0.30, 0.95)),
    ("yellow", (0.95, 0.90, 0.15)),
    ("purple", (0.60, 0.20, 0.80)),
    ("orange", (0.95, 0.55, 0.10)),
    ("cyan", (0.10, 0.85, 0.85)),
    ("magenta", (0.90, 0.15, 0.70)),
    ("olive", (0.55, 0.60, 0.10)),
    ("teal", (0.10, 0.55, 0.55)),
    ("pink", (1.00, 0.55, 0.70)),
    ("gray", (0.55, 0.55, 0.55)),
    ("brown", (0.45, 0.30, 0.15)),
    ("beige", (0.80, 0.75, 0.60)),
    ("slate", (0.35, 0.40, 0.45)),
)

_COLOR_CODE = {name: code for code, (name, _) in enumerate(PALETTE)}
TARGET_COLOR_CODE = _COLOR_CODE[TARGET_COLOR_NAME]
DISTRACTOR_COLOR_CODES = tuple(_COLOR_CODE[n] for n in DISTRACTOR_COLOR_NAMES)


def color_rgb(code: int) -> tuple[float, float, float]:
    return PALETTE[code][1]


@dataclass(frozen=True)
class TaskCatalog:
    """The task table plus the scene bindings the environment needs."""

    tasks: tuple[TaskSpec, ...]
    object_code: dict[int, int]
    bin_id: dict[int, int]
    target_forward_id: int
    target_backward_id: int

    def spec(self, task_id: int) -> TaskSpec:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        raise ValueError(f"unknown task id {task_id}")

    def paired(self, task_id: int) -> int:
        return self.spec(task_id).paired_task_id

    @property
    def prior_forward_ids(self) -> tuple[int, ...]:
        return tuple(
            t.task_id
            for t in self.tasks
            if t.is_forward and t.task_id != self.target_forward_id
        )


def _forward_name(color: str, side: str) -> tuple[str, str]:
    return (f"put {color} disc in {side} bin", f"put the {color} disc in the {side} bin")


def _backward_name(color: str, side: str) -> tuple[str, str]:
    return (f"take {color} disc out of {side} bin", f"take the {color} disc out of the {side} bin")


def build_catalog(n_prior_tasks: int = 20) -> TaskCatalog:
    """Build the target pair plus ``n_prior_tasks`` prior pick-place pairs.

    Prior tasks sweep the task colors across both bins; only their forward
    direction receives demonstrations, but every task has a backward twin so
    pairing stays symmetric. Task ids: 0/1 are the target pair, then prior
    pairs in order.
    """
    max_prior = len(TASK_COLOR_NAMES) * len(BIN_NAMES)
    if not (0 <= n_prior_tasks <= max_prior):
        raise ValueError(f"n_prior_tasks must lie in [0, {max_prior}], got {n_prior_tasks}")
    tasks: list[TaskSpec] = []
    object_code: dict[int, int] = {}
    bin_id: dict[int, int] = {}

    def add_pair(color: str, side_idx: int) -> None:
        fwd_id, bwd_id = len(tasks), len(tasks) + 1
        side = BIN_NAMES[side_idx]
        f_name, f_instr = _forward_name(color, side)
        b_name, b_instr = _backward_name(color, side)
        tasks.append(
            TaskSpec(
                task_id=fwd_id, name=f_name, instruction=f_instr,
                paired_task_id=bwd_id, is_forward=True,
            )
        )
        tasks.append(
            TaskSpec(
                task_id=bwd_id, name=b_name, instruction=b_instr,
                paired_task_id=fwd_id, is_forward=False,
            )
        )
        for tid in (fwd_id, bwd_id):
            object_code[tid] = _COLOR_CODE[color]
            bin_id[tid] = side_idx

    add_pair(TARGET_COLOR_NAME, 1)
    for k in range(n_prior_tasks):
        color = TASK_COLOR_NAMES[k % len(TASK_COLOR_NAMES)]
        side_idx = (k // len(TASK_COLOR_NAMES)) % len(BIN_NAMES)
        add_pair(color, side_idx)

    validate_task_pairing(tasks)
    return TaskCatalog(
        tasks=tuple(tasks),
        object_code=object_code,
        bin_id=bin_id,
        target_forward_id=0,
        target_backward_id=1,
    )
