"""Synthetic cohorts and a closed-form toy learner for end-to-end runs.

Cohorts are two-class Gaussians with an optional mean shift applied to a
fraction of the candidate pool. The learner is a nearest-centroid
classifier over the pooled within-class covariance with a logistic output,
so retraining with one accepted candidate is an exact refit rather than a
stochastic optimization, and integration effects stay analytically small.

All randomness flows through numpy's PCG64 generator. Seeds derive from
``SeedSequence((seed, stream, index))`` tuples with the stream constants
below, so every cohort and every per-sample replicate matrix is
reproducible bit for bit from the ``SyntheticSpec`` seed alone. Replicate noise for the
test cohort reuses the same per-sample seeds before and after retraining;
metric changes therefore isolate the model update instead of re-rolled
noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit

from .config import RunConfig
from .errors import ConfigError, MissingClass, SingularCovariance
from .feature_stats import (
    FeatureMatrix,
    batch_distance_triples,
    calibrate_feature_gates,
    compute_reference_stats,
)
from .gating import EligibilityReport, GateSet, batch_evaluate
from .integration_monitor import IntegrationVerdict, render_verdict
from .perf_metrics import MetricBundle, binary_auc, confusion_metrics
from .uncertainty import (
    UncertaintySummary,
    misclassification_roc,
    summarize,
    youden_threshold,
)

# SeedSequence stream ids; (seed, stream, index) fully determines a draw.
STREAM_BASE = 0
STREAM_TEST = 1
STREAM_CANDIDATES = 2
STREAM_TEST_MC = 3
STREAM_CANDIDATE_MC = 4

_SPEC_KEYS = (
    "seed",
    "dim",
    "n_base",
    "n_test",
    "n_candidates",
    "class_means",
    "class_cov_scale",
    "drift_offset",
    "drift_fraction",
    "label_noise",
    "mc_replicates",
    "mc_noise_scale",
)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(key))


def _replicate_seed(seed: int, stream: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, stream, index)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic run.

    ``class_means`` defaults to all-2 and all-3 vectors, which separates the
    classes by sqrt(dim) standard deviations: enough structure for a useful
    learner, enough overlap for real misclassifications. ``drift_offset``
    is added to the features of the drifted candidate fraction; labels keep
    the underlying class, so drift is purely a feature-space shift.
    """

    seed: int = 7
    dim: int = 8
    n_base: int = 1200
    n_test: int = 800
    n_candidates: int = 12
    class_means: tuple | None = None
    class_cov_scale: float = 1.0
    drift_offset: tuple | None = None
    drift_fraction: float = 0.0
    label_noise: float = 0.0
    mc_replicates: int = 250
    mc_noise_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise ConfigError(f"dim must be at least 2, got {self.dim}")
        if self.n_base < 2 or self.n_test < 2:
            raise ConfigError("n_base and n_test must be at least 2")
        if self.n_candidates < 0:
            raise ConfigError(f"n_candidates must be nonnegative, got {self.n_candidates}")
        if self.class_cov_scale <= 0.0:
            raise ConfigError(f"class_cov_scale must be positive, got {self.class_cov_scale}")
        if not 0.0 <= self.drift_fraction <= 1.0:
            raise ConfigError(f"drift_fraction must be in [0, 1], got {self.drift_fraction}")
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigError(f"label_noise must be in [0, 1), got {self.label_noise}")
        if self.mc_replicates < 1:
            raise ConfigError(f"mc_replicates must be at least 1, got {self.mc_replicates}")
        if self.mc_noise_scale <= 0.0:
            raise ConfigError(f"mc_noise_scale must be positive, got {self.mc_noise_scale}")
        if self.class_means is not None:
            means = tuple(tuple(float(v) for v in m) for m in self.class_means)
            if len(means) != 2 or any(len(m) != self.dim for m in means):
                raise ConfigError("class_means must be two vectors of length dim")
            object.__setattr__(self, "class_means", means)
        if self.drift_offset is not None:
            offset = tuple(float(v) for v in self.drift_offset)
            if len(offset) != self.dim:
                raise ConfigError("drift_offset must have length dim")
            object.__setattr__(self, "drift_offset", offset)

    def resolved_class_means(self) -> np.ndarray:
        if self.class_means is not None:
            return np.asarray(self.class_means, dtype=float)
        return np.stack([np.full(self.dim, 2.0), np.full(self.dim, 3.0)])

    def resolved_drift_offset(self) -> np.ndarray:
        if self.drift_offset is not None:
            return np.asarray(self.drift_offset, dtype=float)
        return np.zeros(self.dim)

    def population_covariance(self) -> np.ndarray:
        """Covariance of the balanced two-class mixture around its mean."""
        delta = np.diff(self.resolved_class_means(), axis=0)[0]
        return self.class_cov_scale**2 * np.eye(self.dim) + 0.25 * np.outer(delta, delta)

    @classmethod
    def from_dict(cls, raw: dict) -> SyntheticSpec:
        if not isinstance(raw, dict):
            raise ConfigError("spec document must be a JSON object")
        unknown = set(raw) - set(_SPEC_KEYS)
        if unknown:
            raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in raw.items()})

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "dim": self.dim,
            "n_base": self.n_base,
            "n_test": self.n_test,
            "n_candidates": self.n_candidates,
            "class_means": None if self.class_means is None else [list(m) for m in self.class_means],
            "class_cov_scale": self.class_cov_scale,
            "drift_offset": None if self.drift_offset is None else list(self.drift_offset),
            "drift_fraction": self.drift_fraction,
            "label_noise": self.label_noise,
            "mc_replicates": self.mc_replicates,
            "mc_noise_scale": self.mc_noise_scale,
        }


@dataclass(frozen=True)
class SyntheticCohorts:
    """Base, test, and candidate cohorts drawn from one spec."""

    base: FeatureMatrix
    base_labels: np.ndarray
    test: FeatureMatrix
    test_labels: np.ndarray
    candidates: FeatureMatrix
    candidate_labels: np.ndarray
    candidate_drifted: np.ndarray


def _draw_cohort(
    spec: SyntheticSpec, n: int, stream: int, prefix: str, with_drift: bool
) -> tuple[FeatureMatrix, np.ndarray, np.ndarray]:
    rng = _rng(spec.seed, stream)
    means = spec.resolved_class_means()
    labels = rng.integers(0, 2, size=n)
    data = means[labels] + spec.class_cov_scale * rng.standard_normal((n, spec.dim))
    if spec.label_noise > 0.0:
        flips = rng.random(n) < spec.label_noise
        labels = np.where(flips, 1 - labels, labels)
    drifted = np.zeros(n, dtype=bool)
    if with_drift and spec.drift_fraction > 0.0:
        drifted = rng.random(n) < spec.drift_fraction
        data = data + drifted[:, None] * spec.resolved_drift_offset()
    ids = tuple(f"{prefix}-{i:05d}" for i in range(n))
    if n == 0:
        data = np.zeros((0, spec.dim))
    return FeatureMatrix(ids=ids, data=data), labels.astype(int), drifted


def generate(spec: SyntheticSpec) -> SyntheticCohorts:
    """Draw the three cohorts for one run, reproducibly from the seed.

    Only candidates can be drifted; base and test always follow the clean
    class-conditional distribution. ``label_noise`` flips each observed
    label independently, in every cohort.
    """
    base, base_labels, _ = _draw_cohort(spec, spec.n_base, STREAM_BASE, "base", False)
    test, test_labels, _ = _draw_cohort(spec, spec.n_test, STREAM_TEST, "test", False)
    candidates, candidate_labels, drifted = _draw_cohort(
        spec, spec.n_candidates, STREAM_CANDIDATES, "cand", True
    )
    return SyntheticCohorts(
        base=base,
        base_labels=base_labels,
        test=test,
        test_labels=test_labels,
        candidates=candidates,
        candidate_labels=candidate_labels,
        candidate_drifted=drifted,
    )


@dataclass(frozen=True)
class ToyLearner:
    """Nearest-centroid Gaussian classifier with a logistic output.

    The discriminant is the linear function implied by the two class
    centroids and the pooled within-class covariance; the class-1
    probability is the logistic of that discriminant, so probability pairs
    sum to 1 by construction.
    """

    class_means: np.ndarray
    inv_pooled_cov: np.ndarray
    prior_log_odds: float

    @classmethod
    def fit(cls, features: np.ndarray, labels: np.ndarray, ridge_scale: float = 1e-6) -> ToyLearner:
        """Closed-form fit: class centroids plus pooled covariance inverse.

        Raises:
            MissingClass: a class has no training rows.
            SingularCovariance: the pooled covariance cannot be inverted.
        """
        data = np.asarray(features, dtype=float)
        truth = np.asarray(labels, dtype=int)
        if data.ndim != 2 or data.shape[0] != truth.shape[0]:
            raise ValueError("features must be N x D with one label per row")
        masks = [truth == 0, truth == 1]
        counts = [int(m.sum()) for m in masks]
        if counts[0] == 0 or counts[1] == 0:
            raise MissingClass("toy learner needs rows from both classes")
        means = np.stack([data[m].mean(axis=0) for m in masks])
        d = data.shape[1]
        scatter = np.zeros((d, d))
        for mask, mean in zip(masks, means):
            centered = data[mask] - mean
            scatter += centered.T @ centered
        pooled = scatter / max(data.shape[0] - 2, 1)
        pooled = (pooled + pooled.T) / 2.0
        epsilon = ridge_scale * float(np.trace(pooled)) / d
        regularized = pooled + epsilon * np.eye(d)
        try:
            factor = cho_factor(regularized, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise SingularCovariance(f"pooled covariance is singular: {exc}") from None
        inv = cho_solve(factor, np.eye(d), check_finite=False)
        inv = (inv + inv.T) / 2.0
        return cls(
            class_means=means,
            inv_pooled_cov=inv,
            prior_log_odds=math.log(counts[1] / counts[0]),
        )

    def logits(self, features: np.ndarray) -> np.ndarray:
        data = np.atleast_2d(np.asarray(features, dtype=float))
        weights = self.inv_pooled_cov @ (self.class_means[1] - self.class_means[0])
        midpoint = (self.class_means[0] + self.class_means[1]) / 2.0
        return (data - midpoint) @ weights + self.prior_log_odds

    def logit(self, x: np.ndarray) -> float:
        return float(self.logits(x)[0])

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        p1 = expit(self.logits(features))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, features: np.ndarray) -> np.ndarray:
        # logit exactly 0 means a tied (0.5, 0.5) pair; argmax tie-breaking
        # picks the lower class index.
        return (self.logits(features) > 0.0).astype(int)


def toy_mc_predict(
    learner: ToyLearner, x: np.ndarray, replicates: int, noise_scale: float, seed: int
) -> np.ndarray:
    """Replicate class probabilities from logit jitter.

    Each replicate adds zero-mean Gaussian noise of scale ``noise_scale`` to
    the discriminant before the logistic map, emulating stochastic forward
    passes. With ``noise_scale`` zero, every row is identical.
    """
    if replicates < 1:
        raise ValueError(f"replicates must be at least 1, got {replicates}")
    if noise_scale < 0.0:
        raise ValueError(f"noise_scale must be nonnegative, got {noise_scale}")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_scale, size=replicates) if noise_scale > 0.0 else np.zeros(replicates)
    p1 = expit(learner.logit(x) + noise)
    return np.column_stack([1.0 - p1, p1])


@dataclass(frozen=True)
class LoopReport:
    """Everything one monitoring run produced, in evaluation order."""

    gates: GateSet
    baseline_metrics: MetricBundle
    eligibility: tuple[EligibilityReport, ...] = field(default_factory=tuple)
    verdicts: tuple[IntegrationVerdict, ...] = field(default_factory=tuple)
    misclassification_auc: float = 0.0
    cohort_sizes: dict = field(default_factory=dict)


def _mc_summaries(
    learner: ToyLearner,
    matrix: FeatureMatrix,
    spec: SyntheticSpec,
    config: RunConfig,
    stream: int,
) -> list[UncertaintySummary]:
    out = []
    for index, (sample_id, x) in enumerate(zip(matrix.ids, matrix.data)):
        seed = _replicate_seed(spec.seed, stream, index)
        rows = toy_mc_predict(learner, x, spec.mc_replicates, spec.mc_noise_scale, seed)
        out.append(summarize(rows, sample_id=sample_id, log_base=config.entropy_log_base))
    return out


def _test_bundle(
    learner: ToyLearner,
    cohorts: SyntheticCohorts,
    spec: SyntheticSpec,
    config: RunConfig,
) -> tuple[MetricBundle, float]:
    summaries = _mc_summaries(learner, cohorts.test, spec, config, STREAM_TEST_MC)
    labels = cohorts.test_labels
    curve = misclassification_roc(summaries, labels)
    threshold = youden_threshold(curve)
    predicted = np.array([s.predicted_class for s in summaries])
    scores = np.array([s.mean_probs[config.positive_class] for s in summaries])
    auc = binary_auc(scores, labels, config.positive_class)
    accuracy, sensitivity, specificity = confusion_metrics(predicted, labels, config.positive_class)
    bundle = MetricBundle(
        auc=auc,
        accuracy=accuracy,
        sensitivity=sensitivity,
        specificity=specificity,
        entropy_threshold=threshold,
    )
    return bundle, curve.auc


def run_monitor_loop(spec: SyntheticSpec, config: RunConfig | None = None) -> LoopReport:
    """Run the three monitoring stages end to end on synthetic cohorts.

    Stage 1 calibrates feature gates on the base cohort. Stage 2 calibrates
    the entropy threshold on the labeled test cohort and gates every
    candidate. Stage 3 refits the learner once per eligible candidate,
    using the gate-assigned label, and renders a safeguard verdict against
    the unchanged test cohort. The same (spec, config) pair always yields a
    report that serializes identically.
    """
    if config is None:
        config = RunConfig()
    cohorts = generate(spec)
    learner = ToyLearner.fit(cohorts.base.data, cohorts.base_labels)

    stats = compute_reference_stats(cohorts.base, config.epsilon_scale)
    base_triples = batch_distance_triples(cohorts.base, stats)
    gates = calibrate_feature_gates(
        base_triples,
        config.pct_euclidean,
        config.pct_cosine,
        config.pct_mahalanobis,
        extra_provenance={"epsilon_scale": config.epsilon_scale},
    )

    baseline, roc_auc = _test_bundle(learner, cohorts, spec, config)
    gates = gates.with_entropy(
        baseline.entropy_threshold,
        extra_provenance={
            "test_count": cohorts.test.n_samples,
            "misclassification_auc": roc_auc,
        },
    )

    candidate_triples = batch_distance_triples(cohorts.candidates, stats)
    candidate_summaries = _mc_summaries(
        learner, cohorts.candidates, spec, config, STREAM_CANDIDATE_MC
    )
    reports = batch_evaluate(zip(candidate_triples, candidate_summaries), gates)

    verdicts = []
    for position, report in enumerate(reports):
        if not report.eligible:
            continue
        augmented = np.vstack([cohorts.base.data, cohorts.candidates.data[position]])
        augmented_labels = np.append(cohorts.base_labels, report.assigned_label)
        retrained = ToyLearner.fit(augmented, augmented_labels)
        after, _ = _test_bundle(retrained, cohorts, spec, config)
        verdicts.append(
            render_verdict(baseline, after, config.safeguard_tolerance_pct, image_id=report.id)
        )

    return LoopReport(
        gates=gates,
        baseline_metrics=baseline,
        eligibility=tuple(reports),
        verdicts=tuple(verdicts),
        misclassification_auc=roc_auc,
        cohort_sizes={
            "base": cohorts.base.n_samples,
            "test": cohorts.test.n_samples,
            "candidates": cohorts.candidates.n_samples,
        },
    )
