"""Continuous monitoring for model updates.

Stage 1 gates candidates on feature-distribution distances, stage 2 adds a
predictive-entropy eligibility threshold calibrated from Monte Carlo
replicates, and stage 3 accepts or rejects each retrained model under a
percent-change safeguard.
"""

from .config import RunConfig
from .errors import (
    ConfigError,
    DegenerateLabels,
    DimensionMismatch,
    DriftGateError,
    EmptyInput,
    InvalidProbabilityRow,
    MissingClass,
    NonFiniteInput,
    ParseError,
    RepCountMismatch,
    SingularCovariance,
    ZeroBaseline,
    ZeroVector,
)
from .feature_stats import (
    DistanceTriple,
    FeatureMatrix,
    ReferenceStats,
    aggregate_over_folds,
    batch_distance_triples,
    calibrate_feature_gates,
    compute_reference_stats,
    distance_triple,
    percentile,
)
from .gating import EligibilityReport, GateSet, batch_evaluate, evaluate_candidate
from .integration_monitor import (
    ALL_METRICS,
    PERFORMANCE_METRICS,
    CriterionCheck,
    IntegrationVerdict,
    percent_change,
    render_verdict,
)
from .perf_metrics import MetricBundle, binary_auc, confusion_metrics
from .synthetic import (
    LoopReport,
    SyntheticSpec,
    ToyLearner,
    generate,
    run_monitor_loop,
    toy_mc_predict,
)
from .uncertainty import (
    McPredictionSet,
    RocCurve,
    RocPoint,
    UncertaintySummary,
    misclassification_roc,
    predictive_entropy,
    summarize,
    youden_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_METRICS",
    "PERFORMANCE_METRICS",
    "ConfigError",
    "CriterionCheck",
    "DegenerateLabels",
    "DimensionMismatch",
    "DistanceTriple",
    "DriftGateError",
    "EligibilityReport",
    "EmptyInput",
    "FeatureMatrix",
    "GateSet",
    "IntegrationVerdict",
    "InvalidProbabilityRow",
    "LoopReport",
    "McPredictionSet",
    "MetricBundle",
    "MissingClass",
    "NonFiniteInput",
    "ParseError",
    "ReferenceStats",
    "RepCountMismatch",
    "RocCurve",
    "RocPoint",
    "RunConfig",
    "SingularCovariance",
    "SyntheticSpec",
    "ToyLearner",
    "UncertaintySummary",
    "ZeroBaseline",
    "ZeroVector",
    "aggregate_over_folds",
    "batch_distance_triples",
    "batch_evaluate",
    "binary_auc",
    "calibrate_feature_gates",
    "compute_reference_stats",
    "confusion_metrics",
    "distance_triple",
    "evaluate_candidate",
    "generate",
    "misclassification_roc",
    "percent_change",
    "percentile",
    "predictive_entropy",
    "render_verdict",
    "run_monitor_loop",
    "summarize",
    "toy_mc_predict",
    "youden_threshold",
]
