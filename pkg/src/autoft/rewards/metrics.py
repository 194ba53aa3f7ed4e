"""Confusion-matrix quality metrics for success detectors.

False positives are the error that matters most: a policy trained against the
detector can exploit them, while missed successes merely slow learning down.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

__all__ = ["RewardMetrics", "evaluate_reward_model"]


@dataclass(frozen=True)
class RewardMetrics:
    false_positive_rate: float
    false_negative_rate: float
    accuracy: float
    precision: float
    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int

    @property
    def positives(self) -> int:
        return self.true_positives + self.false_negatives

    @property
    def negatives(self) -> int:
        return self.true_negatives + self.false_positives


def evaluate_reward_model(
    predictions: Sequence[int], oracle_labels: Sequence[int]
) -> RewardMetrics:
    """Rates from paired predicted and ground-truth binary labels.

    Precision is defined as 1 when nothing was predicted positive; a rate
    whose class is absent from the ground truth is 0.
    """
    if len(predictions) == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    if len(predictions) != len(oracle_labels):
        raise ValueError("predictions and oracle labels must pair up")
    tp = fp = tn = fn = 0
    for pred, truth in zip(predictions, oracle_labels):
        if pred not in (0, 1) or truth not in (0, 1):
            raise ValueError("labels must be binary")
        if pred and truth:
            tp += 1
        elif pred and not truth:
            fp += 1
        elif not pred and truth:
            fn += 1
        else:
            tn += 1
    negatives = tn + fp
    positives = tp + fn
    return RewardMetrics(
        false_positive_rate=fp / negatives if negatives else 0.0,
        false_negative_rate=fn / positives if positives else 0.0,
        accuracy=(tp + tn) / len(predictions),
        precision=tp / (tp + fp) if (tp + fp) else 1.0,
        true_positives=tp,
        false_positives=fp,
        true_negatives=tn,
        false_negatives=fn,
    )
