"""Eligibility gates combining feature-distance and entropy thresholds."""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field, replace

from .feature_stats import DistanceTriple
from .uncertainty import UncertaintySummary


@dataclass(frozen=True)
class GateSet:
    """Calibrated thresholds for the four eligibility criteria.

    ``entropy_threshold`` stays None until the uncertainty calibration stage
    has run; feature-only gate sets cannot make final decisions.
    ``provenance`` records how the thresholds were derived (percentiles,
    cohort sizes, and similar).
    """

    euclidean_threshold: float
    cosine_threshold: float
    mahalanobis_threshold: float
    entropy_threshold: float | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("euclidean_threshold", "mahalanobis_threshold"):
            value = float(getattr(self, name))
            object.__setattr__(self, name, value)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        cosine = float(self.cosine_threshold)
        object.__setattr__(self, "cosine_threshold", cosine)
        if not -1.0 <= cosine <= 1.0:
            raise ValueError(f"cosine_threshold must be in [-1, 1], got {cosine}")
        if self.entropy_threshold is not None:
            entropy = float(self.entropy_threshold)
            object.__setattr__(self, "entropy_threshold", entropy)
            if not math.isfinite(entropy) or entropy < 0.0:
                raise ValueError(f"entropy_threshold must be finite and nonnegative, got {entropy}")

    @property
    def complete(self) -> bool:
        return self.entropy_threshold is not None

    def with_entropy(self, threshold: float, extra_provenance: dict | None = None) -> GateSet:
        """Copy of this gate set with the entropy threshold installed."""
        provenance = dict(self.provenance)
        if extra_provenance:
            provenance.update(extra_provenance)
        return replace(self, entropy_threshold=float(threshold), provenance=provenance)


@dataclass(frozen=True)
class EligibilityReport:
    """Pass/fail record for one candidate against a gate set.

    ``assigned_label`` is the model's predicted class and is present exactly
    when the candidate is eligible; ineligible candidates get no label.
    """

    id: str
    triple: DistanceTriple
    entropy: float
    pass_euclidean: bool
    pass_cosine: bool
    pass_mahalanobis: bool
    pass_entropy: bool
    eligible: bool
    assigned_label: int | None

    def __post_init__(self) -> None:
        conjunction = (
            self.pass_euclidean
            and self.pass_cosine
            and self.pass_mahalanobis
            and self.pass_entropy
        )
        if self.eligible != conjunction:
            raise ValueError("eligible must be the conjunction of the four gates")
        if self.eligible and self.assigned_label is None:
            raise ValueError("eligible candidates must carry an assigned label")
        if not self.eligible and self.assigned_label is not None:
            raise ValueError("ineligible candidates must not carry a label")


def evaluate_candidate(
    triple: DistanceTriple, summary: UncertaintySummary, gates: GateSet
) -> EligibilityReport:
    """Gate one candidate on all four criteria.

    Distances pass at or below their thresholds, cosine passes at or above
    its threshold, and entropy must be strictly below the entropy threshold;
    a candidate exactly at the entropy threshold fails that gate.
    """
    if gates.entropy_threshold is None:
        raise ValueError("gate set has no entropy threshold; calibrate it first")
    pass_euclidean = triple.euclidean <= gates.euclidean_threshold
    pass_cosine = triple.cosine >= gates.cosine_threshold
    pass_mahalanobis = triple.mahalanobis <= gates.mahalanobis_threshold
    pass_entropy = summary.entropy < gates.entropy_threshold
    eligible = pass_euclidean and pass_cosine and pass_mahalanobis and pass_entropy
    return EligibilityReport(
        id=summary.id,
        triple=triple,
        entropy=summary.entropy,
        pass_euclidean=pass_euclidean,
        pass_cosine=pass_cosine,
        pass_mahalanobis=pass_mahalanobis,
        pass_entropy=pass_entropy,
        eligible=eligible,
        assigned_label=summary.predicted_class if eligible else None,
    )


def batch_evaluate(
    candidates: Iterable[tuple[DistanceTriple, UncertaintySummary]], gates: GateSet
) -> list[EligibilityReport]:
    """Evaluate candidates in order; one report per input pair."""
    return [evaluate_candidate(triple, summary, gates) for triple, summary in candidates]
