"""Monte Carlo prediction aggregation and entropy-threshold calibration.

Stochastic forward passes give each sample an R x C matrix of class
probability rows. Averaging the rows yields one predictive distribution per
sample, and the entropy of that average is its uncertainty score. Relating
entropy to prediction correctness on a labeled cohort produces an ROC curve
whose Youden-optimal point becomes the eligibility threshold.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels, InvalidProbabilityRow

# Replicate rows may miss an exact unit sum by this much and still be
# renormalized rather than rejected.
ROW_SUM_TOLERANCE = 1e-6


def validate_replicates(replicates: np.ndarray) -> np.ndarray:
    """Check and renormalize an R x C matrix of probability rows.

    Rows whose sum is within ``ROW_SUM_TOLERANCE`` of 1 are rescaled to sum
    exactly to 1; anything farther off, or any entry outside [0, 1], is
    rejected.

    Raises:
        InvalidProbabilityRow: a row fails the checks above.
    """
    arr = np.asarray(replicates, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"replicates must be a 2-D matrix, got shape {arr.shape}")
    rows, classes = arr.shape
    if rows < 1:
        raise ValueError("replicates need at least one row")
    if classes < 2:
        raise ValueError("replicates need at least two class columns")
    if not np.isfinite(arr).all():
        bad = int(np.argwhere(~np.isfinite(arr).all(axis=1))[0, 0])
        raise InvalidProbabilityRow(f"replicate row {bad} contains NaN or Inf")
    if (arr < 0.0).any() or (arr > 1.0).any():
        bad = int(np.argwhere(((arr < 0.0) | (arr > 1.0)).any(axis=1))[0, 0])
        raise InvalidProbabilityRow(f"replicate row {bad} has an entry outside [0, 1]")
    sums = arr.sum(axis=1)
    off = np.abs(sums - 1.0) > ROW_SUM_TOLERANCE
    if off.any():
        bad = int(np.argmax(off))
        raise InvalidProbabilityRow(
            f"replicate row {bad} sums to {sums[bad]:.8f}, outside tolerance {ROW_SUM_TOLERANCE:g}"
        )
    return arr / sums[:, None]


def predictive_entropy(probs: np.ndarray, log_base: float = math.e) -> float:
    """Shannon entropy of a probability vector; 0 * log(0) is taken as 0."""
    p = np.asarray(probs, dtype=float)
    positive = p[p > 0.0]
    entropy = float(-(positive * np.log(positive)).sum())
    if log_base != math.e:
        entropy /= math.log(log_base)
    return entropy


@dataclass(frozen=True)
class UncertaintySummary:
    """Averaged prediction and its entropy for one sample.

    ``predicted_class`` is the argmax of ``mean_probs`` with ties resolved
    to the lowest class index.
    """

    id: str
    mean_probs: np.ndarray
    entropy: float
    predicted_class: int

    def __post_init__(self) -> None:
        probs = np.asarray(self.mean_probs, dtype=float)
        object.__setattr__(self, "mean_probs", probs)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "entropy", float(self.entropy))
        object.__setattr__(self, "predicted_class", int(self.predicted_class))
        if probs.ndim != 1 or probs.shape[0] < 2:
            raise ValueError("mean_probs must be a vector of at least two classes")
        if abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError(f"mean_probs sum to {float(probs.sum()):.12f}, not 1")
        if not math.isfinite(self.entropy) or self.entropy < 0.0:
            raise ValueError(f"entropy must be finite and nonnegative, got {self.entropy}")
        if not 0 <= self.predicted_class < probs.shape[0]:
            raise ValueError("predicted_class is out of range")


def summarize(
    replicates: np.ndarray, sample_id: str = "", log_base: float = math.e
) -> UncertaintySummary:
    """Average replicate probability rows and score their entropy.

    Args:
        replicates: R x C matrix of per-replicate class probabilities.
        sample_id: identifier carried into the summary.
        log_base: base of the entropy logarithm; the natural log by default.

    Raises:
        InvalidProbabilityRow: a row is not a probability vector.
    """
    if log_base <= 1.0:
        raise ValueError(f"log_base must be greater than 1, got {log_base}")
    rows = validate_replicates(replicates)
    mean = rows.mean(axis=0)
    mean = mean / mean.sum()
    entropy = predictive_entropy(mean, log_base)
    # Rounding can push a near-uniform average a hair past the theoretical
    # maximum; clamp so the summary invariant holds exactly.
    entropy = min(entropy, math.log(rows.shape[1]) / math.log(log_base))
    return UncertaintySummary(
        id=sample_id,
        mean_probs=mean,
        entropy=entropy,
        predicted_class=int(np.argmax(mean)),
    )


@dataclass(frozen=True)
class McPredictionSet:
    """Replicate predictions for a cohort, aligned by position.

    Each entry of ``replicates`` is one sample's R x C matrix; rows are
    validated and renormalized on construction. ``labels`` is optional and,
    when present, aligns with ``ids``.
    """

    ids: tuple[str, ...]
    replicates: tuple[np.ndarray, ...]
    labels: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        ids = tuple(str(i) for i in self.ids)
        object.__setattr__(self, "ids", ids)
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in prediction set")
        validated = tuple(validate_replicates(m) for m in self.replicates)
        object.__setattr__(self, "replicates", validated)
        if len(validated) != len(ids):
            raise ValueError(f"{len(validated)} replicate matrices for {len(ids)} ids")
        if not validated:
            raise ValueError("prediction set is empty")
        classes = {m.shape[1] for m in validated}
        if len(classes) > 1:
            raise ValueError(f"inconsistent class counts across samples: {sorted(classes)}")
        if self.labels is not None:
            labels = tuple(int(v) for v in self.labels)
            object.__setattr__(self, "labels", labels)
            if len(labels) != len(ids):
                raise ValueError(f"{len(labels)} labels for {len(ids)} ids")
            n_classes = validated[0].shape[1]
            if any(not 0 <= v < n_classes for v in labels):
                raise ValueError("label out of range for the class count")

    @property
    def n_classes(self) -> int:
        return self.replicates[0].shape[1]

    def replicate_counts(self) -> dict[str, int]:
        return {sid: m.shape[0] for sid, m in zip(self.ids, self.replicates)}

    def label_map(self) -> dict[str, int]:
        if self.labels is None:
            raise ValueError("prediction set carries no labels")
        return dict(zip(self.ids, self.labels))

    def summaries(self, log_base: float = math.e) -> list[UncertaintySummary]:
        return [
            summarize(m, sample_id=sid, log_base=log_base)
            for sid, m in zip(self.ids, self.replicates)
        ]


@dataclass(frozen=True)
class RocPoint:
    """One operating point: (FPR, TPR) at a decision threshold."""

    false_positive_rate: float
    true_positive_rate: float
    threshold: float


@dataclass(frozen=True)
class RocCurve:
    """Operating points sorted by ascending threshold, plus the curve AUC.

    The first point is the permissive extreme (1, 1) at threshold -inf and
    the last is the strict extreme (0, 0) at threshold +inf.
    """

    points: tuple[RocPoint, ...]
    auc: float

    def __post_init__(self) -> None:
        points = tuple(self.points)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "auc", float(self.auc))
        if len(points) < 2:
            raise ValueError("an ROC curve needs at least the two extreme points")
        thresholds = [p.threshold for p in points]
        if any(b < a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("ROC points must be sorted by ascending threshold")
        for p in points:
            if not 0.0 <= p.false_positive_rate <= 1.0 or not 0.0 <= p.true_positive_rate <= 1.0:
                raise ValueError("ROC rates must be in [0, 1]")
        first, last = points[0], points[-1]
        if (first.false_positive_rate, first.true_positive_rate) != (1.0, 1.0):
            raise ValueError("ROC curve must start at (1, 1)")
        if (last.false_positive_rate, last.true_positive_rate) != (0.0, 0.0):
            raise ValueError("ROC curve must end at (0, 0)")
        if not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"auc must be in [0, 1], got {self.auc}")


def misclassification_roc(
    summaries: Sequence[UncertaintySummary],
    labels: Mapping[str, int] | Sequence[int],
) -> RocCurve:
    """ROC for detecting misclassification from predictive entropy.

    The positive class is "the prediction is wrong" and the score is the
    sample's entropy; a sample counts as flagged at threshold t when its
    entropy is at least t. Candidate thresholds are the midpoints between
    consecutive distinct entropies plus -inf and +inf sentinels, which
    traces the exact step curve, so the trapezoidal AUC equals the
    tie-adjusted pair-counting statistic.

    Args:
        summaries: one summary per sample.
        labels: true class per sample, either keyed by id or aligned by
            position.

    Raises:
        DegenerateLabels: every prediction is correct, or every one wrong.
    """
    if len(summaries) == 0:
        raise ValueError("no summaries given")
    if isinstance(labels, Mapping):
        missing = [s.id for s in summaries if s.id not in labels]
        if missing:
            raise ValueError(f"no label for ids {missing[:5]}")
        truth = [int(labels[s.id]) for s in summaries]
    else:
        if len(labels) != len(summaries):
            raise ValueError(f"{len(labels)} labels for {len(summaries)} summaries")
        truth = [int(v) for v in labels]
    scores = np.array([s.entropy for s in summaries], dtype=float)
    wrong = np.array(
        [s.predicted_class != t for s, t in zip(summaries, truth)], dtype=bool
    )
    n_pos = int(wrong.sum())
    n_neg = int((~wrong).sum())
    if n_pos == 0:
        raise DegenerateLabels("every prediction is correct; the ROC is undefined")
    if n_neg == 0:
        raise DegenerateLabels("every prediction is wrong; the ROC is undefined")
    distinct = np.unique(scores)
    candidates = np.concatenate(
        [[-math.inf], (distinct[:-1] + distinct[1:]) / 2.0, [math.inf]]
    )
    pos_sorted = np.sort(scores[wrong])
    neg_sorted = np.sort(scores[~wrong])
    points = []
    for threshold in candidates:
        tp = n_pos - int(np.searchsorted(pos_sorted, threshold, side="left"))
        fp = n_neg - int(np.searchsorted(neg_sorted, threshold, side="left"))
        points.append(RocPoint(fp / n_neg, tp / n_pos, float(threshold)))
    auc = math.fsum(
        (a.false_positive_rate - b.false_positive_rate)
        * (a.true_positive_rate + b.true_positive_rate)
        / 2.0
        for a, b in zip(points, points[1:])
    )
    return RocCurve(points=tuple(points), auc=min(max(auc, 0.0), 1.0))


def youden_threshold(curve: RocCurve) -> float:
    """Threshold maximizing TPR - FPR; ties resolve to the smallest one."""
    best_j = -math.inf
    best_threshold = math.inf
    for point in curve.points:  # ascending threshold, so first win is smallest
        j = point.true_positive_rate - point.false_positive_rate
        if j > best_j:
            best_j = j
            best_threshold = point.threshold
    return float(best_threshold)
