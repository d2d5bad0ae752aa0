"""Reference feature distribution and per-sample distance metrics.

A base cohort of feature vectors is summarized by its mean and regularized
covariance. New samples are compared against that summary with Euclidean
distance to the mean, cosine similarity to the mean, and Mahalanobis
distance. Percentile gates over the cohort's own distances turn those
metrics into in-distribution thresholds.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve

from .errors import EmptyInput, NonFiniteInput, SingularCovariance, ZeroVector

if TYPE_CHECKING:
    from .gating import GateSet

# Rows per work block in batch_distance_triples. Fixed so results do not
# depend on the worker count.
_BLOCK_ROWS = 2048


@dataclass(frozen=True)
class FeatureMatrix:
    """Cohort of per-sample feature vectors.

    ``fold_tags``, when present, names the model checkpoint each row came
    from; the same sample id may then appear once per fold. Without tags,
    ids must be unique.
    """

    ids: tuple[str, ...]
    data: np.ndarray
    fold_tags: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        if data.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if d < 1:
            raise ValueError("feature matrix needs at least one column")
        if len(self.ids) != n:
            raise ValueError(f"{len(self.ids)} ids for {n} rows")
        if n and not np.isfinite(data).all():
            raise NonFiniteInput("feature matrix contains NaN or Inf")
        if self.fold_tags is not None:
            tags = tuple(int(t) for t in self.fold_tags)
            object.__setattr__(self, "fold_tags", tags)
            if len(tags) != n:
                raise ValueError(f"{len(tags)} fold tags for {n} rows")
            keys: list = list(zip(self.ids, tags))
        else:
            keys = list(self.ids)
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (id, fold) pairs in feature matrix")

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ReferenceStats:
    """Mean and regularized covariance summary of the reference cohort.

    ``inv_covariance`` is the inverse of ``covariance + epsilon * I``, not of
    the raw covariance; both are kept so serialized stats can be checked
    against each other on reload.
    """

    mean: np.ndarray
    covariance: np.ndarray
    inv_covariance: np.ndarray
    regularization_epsilon: float
    sample_count: int

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        inv = np.asarray(self.inv_covariance, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "inv_covariance", inv)
        object.__setattr__(self, "regularization_epsilon", float(self.regularization_epsilon))
        object.__setattr__(self, "sample_count", int(self.sample_count))
        d = mean.shape[0] if mean.ndim == 1 else -1
        if d < 1 or cov.shape != (d, d) or inv.shape != (d, d):
            raise ValueError("mean must be length D with D x D covariance and inverse")
        if self.sample_count < 2:
            raise ValueError("reference stats need at least two samples")
        if self.regularization_epsilon < 0.0:
            raise ValueError("regularization epsilon must be nonnegative")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all() and np.isfinite(inv).all()):
            raise NonFiniteInput("reference stats contain NaN or Inf")
        scale = max(float(np.abs(cov).max()), 1.0)
        if float(np.abs(cov - cov.T).max()) > 1e-9 * scale:
            raise ValueError("covariance is not symmetric")
        product = self.regularized_covariance @ inv
        if float(np.abs(product - np.eye(d)).max()) > 1e-6:
            raise ValueError("inv_covariance does not invert the regularized covariance")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def regularized_covariance(self) -> np.ndarray:
        d = self.covariance.shape[0]
        return self.covariance + self.regularization_epsilon * np.eye(d)


@dataclass(frozen=True)
class DistanceTriple:
    """The three per-sample distance metrics, in a fixed order."""

    euclidean: float
    cosine: float
    mahalanobis: float

    def __post_init__(self) -> None:
        for name in ("euclidean", "cosine", "mahalanobis"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} metric must be finite, got {value}")
            object.__setattr__(self, name, value)


def compute_reference_stats(base: FeatureMatrix, epsilon_scale: float = 1e-6) -> ReferenceStats:
    """Fit the reference distribution of a base cohort.

    The covariance uses the unbiased N-1 denominator and is regularized as
    ``cov + eps * I`` with ``eps = epsilon_scale * trace(cov) / D`` before a
    Cholesky factorization produces its inverse, so the scale of the ridge
    follows the scale of the features.

    Args:
        base: cohort with at least two rows.
        epsilon_scale: nonnegative multiplier for the trace-scaled ridge.

    Raises:
        SingularCovariance: the regularized covariance cannot be factorized
            or its inverse fails a round-trip identity check. Degenerate
            cohorts (for example all rows identical with a zero ridge) land
            here.
    """
    if base.n_samples < 2:
        raise ValueError("reference stats need at least two samples")
    if epsilon_scale < 0.0:
        raise ValueError("epsilon_scale must be nonnegative")
    data = base.data
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (base.n_samples - 1)
    cov = (cov + cov.T) / 2.0  # remove float asymmetry from the matmul
    d = base.dim
    epsilon = epsilon_scale * float(np.trace(cov)) / d
    regularized = cov + epsilon * np.eye(d)
    try:
        factor = cho_factor(regularized, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularCovariance(
            f"covariance factorization failed with epsilon={epsilon:g}: {exc}"
        ) from None
    inv = cho_solve(factor, np.eye(d), check_finite=False)
    inv = (inv + inv.T) / 2.0
    if not np.isfinite(inv).all() or float(np.abs(regularized @ inv - np.eye(d)).max()) > 1e-6:
        raise SingularCovariance("regularized covariance is numerically singular")
    return ReferenceStats(
        mean=mean,
        covariance=cov,
        inv_covariance=inv,
        regularization_epsilon=epsilon,
        sample_count=base.n_samples,
    )


def distance_triple(x: np.ndarray, stats: ReferenceStats) -> DistanceTriple:
    """Euclidean, cosine-to-mean, and Mahalanobis metrics for one sample.

    Cosine is taken between the raw vectors, not the centered ones, so it
    measures orientation relative to the reference mean. The Mahalanobis
    form uses the stored regularized inverse; tiny negative quadratic forms
    from rounding are clamped to zero before the square root.

    Raises:
        ZeroVector: the sample or the reference mean has zero norm.
        NonFiniteInput: the sample contains NaN or Inf.
    """
    vec = np.asarray(x, dtype=float).reshape(-1)
    if vec.shape[0] != stats.dim:
        raise ValueError(f"sample has dimension {vec.shape[0]}, stats expect {stats.dim}")
    if not np.isfinite(vec).all():
        raise NonFiniteInput("sample contains NaN or Inf")
    diff = vec - stats.mean
    euclidean = float(np.linalg.norm(diff))
    norm_x = float(np.linalg.norm(vec))
    norm_mean = float(np.linalg.norm(stats.mean))
    if norm_x == 0.0 or norm_mean == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero-norm vector")
    cosine = float(vec @ stats.mean) / (norm_x * norm_mean)
    cosine = min(1.0, max(-1.0, cosine))
    quad = float(diff @ stats.inv_covariance @ diff)
    mahalanobis = math.sqrt(max(quad, 0.0))
    return DistanceTriple(euclidean=euclidean, cosine=cosine, mahalanobis=mahalanobis)


def _block_triples(block: np.ndarray, stats: ReferenceStats, norm_mean: float) -> list[DistanceTriple]:
    diff = block - stats.mean
    euclidean = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    row_norms = np.sqrt(np.einsum("ij,ij->i", block, block))
    if np.any(row_norms == 0.0):
        raise ZeroVector("cosine similarity is undefined for a zero-norm vector")
    cosine = np.clip((block @ stats.mean) / (row_norms * norm_mean), -1.0, 1.0)
    quad = np.einsum("ij,ij->i", diff @ stats.inv_covariance, diff)
    mahalanobis = np.sqrt(np.maximum(quad, 0.0))
    return [
        DistanceTriple(float(e), float(c), float(m))
        for e, c, m in zip(euclidean, cosine, mahalanobis)
    ]


def batch_distance_triples(
    matrix: FeatureMatrix, stats: ReferenceStats, max_workers: int = 1
) -> list[DistanceTriple]:
    """Distance triples for every row of a cohort, in row order.

    Rows are processed in fixed-size blocks; ``max_workers`` only spreads the
    blocks over threads, so the result is identical for any worker count.
    """
    if matrix.dim != stats.dim:
        raise ValueError(f"cohort has dimension {matrix.dim}, stats expect {stats.dim}")
    if matrix.n_samples == 0:
        return []
    norm_mean = float(np.linalg.norm(stats.mean))
    if norm_mean == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero-norm mean")
    blocks = [
        matrix.data[start : start + _BLOCK_ROWS]
        for start in range(0, matrix.n_samples, _BLOCK_ROWS)
    ]
    if max_workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_block = list(pool.map(lambda b: _block_triples(b, stats, norm_mean), blocks))
    else:
        per_block = [_block_triples(b, stats, norm_mean) for b in blocks]
    return [triple for block in per_block for triple in block]


def percentile(values: Sequence[float] | np.ndarray, p: float) -> float:
    """Percentile with linear interpolation at rank ``p / 100 * (n - 1)``.

    Raises:
        EmptyInput: no values were given.
        NonFiniteInput: a value is NaN or Inf.
    """
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise EmptyInput("percentile of an empty list")
    if not np.isfinite(arr).all():
        raise NonFiniteInput("percentile input contains NaN or Inf")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile rank must be in [0, 100], got {p}")
    return float(np.percentile(arr, p, method="linear"))


def calibrate_feature_gates(
    base_triples: Iterable[DistanceTriple],
    pct_euclidean: float = 80.0,
    pct_cosine: float = 20.0,
    pct_mahalanobis: float = 80.0,
    extra_provenance: dict | None = None,
) -> "GateSet":
    """Percentile thresholds over a calibration cohort's own distances.

    Distance gates sit at upper percentiles (samples must not be farther
    than most of the cohort) while the cosine gate sits at a lower
    percentile (samples must not be less aligned than most of the cohort).
    Returns a gate set with no entropy threshold; that part is calibrated
    separately from prediction replicates.

    Raises:
        EmptyInput: no calibration triples were given.
    """
    from .gating import GateSet

    triples = list(base_triples)
    if not triples:
        raise EmptyInput("no calibration triples")
    for name, p in (
        ("pct_euclidean", pct_euclidean),
        ("pct_cosine", pct_cosine),
        ("pct_mahalanobis", pct_mahalanobis),
    ):
        if not 0.0 <= p <= 100.0:
            raise ValueError(f"{name} must be in [0, 100], got {p}")
    provenance = {
        "pct_euclidean": float(pct_euclidean),
        "pct_cosine": float(pct_cosine),
        "pct_mahalanobis": float(pct_mahalanobis),
        "base_count": len(triples),
    }
    if extra_provenance:
        provenance.update(extra_provenance)
    return GateSet(
        euclidean_threshold=percentile([t.euclidean for t in triples], pct_euclidean),
        cosine_threshold=percentile([t.cosine for t in triples], pct_cosine),
        mahalanobis_threshold=percentile([t.mahalanobis for t in triples], pct_mahalanobis),
        entropy_threshold=None,
        provenance=provenance,
    )


def aggregate_over_folds(per_fold: Iterable[DistanceTriple]) -> DistanceTriple:
    """Component-wise mean of one sample's per-fold distance triples.

    Uses exact summation, so the result does not depend on fold order.

    Raises:
        EmptyInput: no triples were given.
    """
    triples = list(per_fold)
    if not triples:
        raise EmptyInput("no fold triples to aggregate")
    n = len(triples)
    return DistanceTriple(
        euclidean=math.fsum(t.euclidean for t in triples) / n,
        cosine=math.fsum(t.cosine for t in triples) / n,
        mahalanobis=math.fsum(t.mahalanobis for t in triples) / n,
    )
