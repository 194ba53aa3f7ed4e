"""Shared prediction type for all success detectors."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["RewardPrediction", "prediction_from_p_yes"]


@dataclass(frozen=True)
class RewardPrediction:
    """Binary success verdict with its underlying yes-probability.

    The label is 1 exactly when ``p_yes`` is strictly above one half: a tie
    counts as failure, because a spurious positive is the damaging error for
    a policy that gets to exploit it.
    """

    label: int
    p_yes: float

    def __post_init__(self):
        if not (0.0 <= self.p_yes <= 1.0):
            raise ValueError(f"p_yes must lie in [0, 1], got {self.p_yes}")
        if self.label != (1 if self.p_yes > 0.5 else 0):
            raise ValueError("label must equal (p_yes > 0.5)")


def prediction_from_p_yes(p_yes: float) -> RewardPrediction:
    return RewardPrediction(label=1 if p_yes > 0.5 else 0, p_yes=float(p_yes))
