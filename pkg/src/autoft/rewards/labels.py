"""Turning demonstrations into success/failure training labels.

A demonstration that ends in success shows the detector what completion looks
like only near its end: the three final post-action states are positives and
everything earlier is a negative. Failure observations are always negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import DatasetBundle, Observation

__all__ = ["LabelledExample", "build_labelled_set", "POSITIVE_TAIL_STATES"]

POSITIVE_TAIL_STATES = 3


@dataclass(frozen=True)
class LabelledExample:
    """One observation with its task and binary success label.

    ``group`` identifies the source trajectory (or failure record) so that
    train/holdout splits can separate whole episodes instead of leaking
    near-duplicate frames across the split.
    """

    obs: Observation
    task_id: int
    label: int
    group: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


def build_labelled_set(bundle: DatasetBundle) -> list[LabelledExample]:
    """Label every post-action state of every demonstration plus all failures.

    Successful demos: the last ``POSITIVE_TAIL_STATES`` states get label 1,
    earlier ones 0; demos shorter than that are all positive. Unsuccessful
    demos (if present) contribute only negatives. Failure observations are
    negatives for their task.
    """
    examples: list[LabelledExample] = []
    group = 0
    for traj in bundle.demonstrations:
        states = [tr.next_obs for tr in traj.transitions]
        first_positive = len(states) - POSITIVE_TAIL_STATES if traj.success else len(states)
        for i, obs in enumerate(states):
            examples.append(
                LabelledExample(
                    obs=obs,
                    task_id=traj.task_id,
                    label=1 if i >= first_positive else 0,
                    group=group,
                )
            )
        group += 1
    for failure in bundle.failures:
        examples.append(
            LabelledExample(obs=failure.obs, task_id=failure.task_id, label=0, group=group)
        )
        group += 1
    return examples
