"""Test-cohort performance metrics: confusion rates and ranking AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabels, MissingClass, NonFiniteInput


@dataclass(frozen=True)
class MetricBundle:
    """The five monitored quantities for one model state."""

    auc: float
    accuracy: float
    sensitivity: float
    specificity: float
    entropy_threshold: float

    def __post_init__(self) -> None:
        for name in ("auc", "accuracy", "sensitivity", "specificity"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        threshold = float(self.entropy_threshold)
        object.__setattr__(self, "entropy_threshold", threshold)
        if not math.isfinite(threshold) or threshold < 0.0:
            raise ValueError(f"entropy_threshold must be finite and nonnegative, got {threshold}")


def confusion_metrics(
    predicted: np.ndarray, labels: np.ndarray, positive_class: int = 1
) -> tuple[float, float, float]:
    """(accuracy, sensitivity, specificity) of hard predictions.

    Any label other than ``positive_class`` counts as negative.

    Raises:
        MissingClass: the labels lack a positive or a negative example.
    """
    pred = np.asarray(predicted).reshape(-1)
    truth = np.asarray(labels).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"{pred.shape[0]} predictions for {truth.shape[0]} labels")
    if pred.size == 0:
        raise ValueError("no predictions given")
    actual_pos = truth == positive_class
    predicted_pos = pred == positive_class
    n_pos = int(actual_pos.sum())
    n_neg = int(pred.size - n_pos)
    if n_pos == 0:
        raise MissingClass(f"no labels equal the positive class {positive_class}")
    if n_neg == 0:
        raise MissingClass(f"every label equals the positive class {positive_class}")
    tp = int((actual_pos & predicted_pos).sum())
    tn = int((~actual_pos & ~predicted_pos).sum())
    accuracy = (tp + tn) / pred.size
    sensitivity = tp / n_pos
    specificity = tn / n_neg
    return float(accuracy), float(sensitivity), float(specificity)


def binary_auc(scores: np.ndarray, labels: np.ndarray, positive_class: int = 1) -> float:
    """Probability that a random positive outscores a random negative.

    Tied pairs count half. Computed from tie-averaged ranks in O(n log n),
    which is exactly the pair-counting Mann-Whitney statistic.

    Raises:
        DegenerateLabels: only one class is present.
        NonFiniteInput: a score is NaN or Inf.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    truth = np.asarray(labels).reshape(-1)
    if s.shape != truth.shape:
        raise ValueError(f"{s.shape[0]} scores for {truth.shape[0]} labels")
    if s.size == 0:
        raise ValueError("no scores given")
    if not np.isfinite(s).all():
        raise NonFiniteInput("scores contain NaN or Inf")
    positive = truth == positive_class
    n_pos = int(positive.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs at least one positive and one negative")
    ranks = rankdata(s)
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
