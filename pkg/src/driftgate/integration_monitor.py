"""Accept/reject verdicts for model updates under a percent-change safeguard.

A retrained model is compared with the deployed baseline metric by metric.
Performance metrics may not drop by more than the tolerance, and the
uncertainty threshold may not rise by more than it; a single violation
rejects the update. Every criterion is reported either way, so the decision
is auditable after the fact.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ZeroBaseline
from .perf_metrics import MetricBundle

# Higher is better for these; the entropy threshold is better lower.
PERFORMANCE_METRICS = ("auc", "accuracy", "sensitivity", "specificity")
ALL_METRICS = PERFORMANCE_METRICS + ("entropy_threshold",)


@dataclass(frozen=True)
class CriterionCheck:
    """One safeguard criterion: its change, its limit, and the outcome."""

    metric: str
    percent_change: float
    limit_pct: float
    passed: bool
    detail: str


@dataclass(frozen=True)
class IntegrationVerdict:
    """Outcome of integrating one candidate, with per-criterion evidence."""

    image_id: str | None
    before: MetricBundle
    after: MetricBundle
    changes: dict[str, float]
    accepted: bool
    reasons: tuple[CriterionCheck, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "reasons", tuple(self.reasons))
        if self.accepted != all(r.passed for r in self.reasons):
            raise ValueError("accepted must mean every criterion passed")
        if set(self.changes) != set(ALL_METRICS):
            raise ValueError("changes must cover exactly the monitored metrics")


def percent_change(x: float, y: float) -> float:
    """Relative change of ``x`` against baseline ``y``, in percent.

    Raises:
        ZeroBaseline: the baseline is zero.
    """
    if y == 0.0:
        raise ZeroBaseline("percent change against a zero baseline is undefined")
    return (x - y) / y * 100.0


def render_verdict(
    before: MetricBundle,
    after: MetricBundle,
    tolerance_pct: float = 5.0,
    image_id: str | None = None,
) -> IntegrationVerdict:
    """Compare post-update metrics to the baseline bundle.

    A performance metric fails when its percent change is strictly below
    ``-tolerance_pct``; the entropy threshold fails when its change is
    strictly above ``+tolerance_pct``. Changes exactly at the limit pass.
    Entropy-threshold decreases pass at any magnitude; a drastic drop is
    called out in the detail text but does not affect the verdict.

    Raises:
        ZeroBaseline: any baseline metric is zero.
    """
    if tolerance_pct <= 0.0:
        raise ValueError(f"tolerance_pct must be positive, got {tolerance_pct}")
    changes: dict[str, float] = {}
    reasons: list[CriterionCheck] = []
    for metric in PERFORMANCE_METRICS:
        change = percent_change(getattr(after, metric), getattr(before, metric))
        changes[metric] = change
        passed = change >= -tolerance_pct
        if passed:
            detail = f"{metric} changed {change:+.2f}%, within the -{tolerance_pct:.2f}% floor"
        else:
            detail = (
                f"{metric} dropped to {getattr(after, metric):.6g} "
                f"({change:+.2f}%), below the -{tolerance_pct:.2f}% floor"
            )
        reasons.append(CriterionCheck(metric, change, tolerance_pct, passed, detail))
    change = percent_change(after.entropy_threshold, before.entropy_threshold)
    changes["entropy_threshold"] = change
    passed = change <= tolerance_pct
    if not passed:
        detail = (
            f"entropy_threshold rose to {after.entropy_threshold:.6g} "
            f"({change:+.2f}%), above the +{tolerance_pct:.2f}% ceiling"
        )
    elif change < -50.0:
        detail = (
            f"entropy_threshold changed {change:+.2f}%, within the "
            f"+{tolerance_pct:.2f}% ceiling (sharp drop, worth a look)"
        )
    else:
        detail = f"entropy_threshold changed {change:+.2f}%, within the +{tolerance_pct:.2f}% ceiling"
    reasons.append(CriterionCheck("entropy_threshold", change, tolerance_pct, passed, detail))
    return IntegrationVerdict(
        image_id=image_id,
        before=before,
        after=after,
        changes=changes,
        accepted=all(r.passed for r in reasons),
        reasons=tuple(reasons),
    )
