"""CSV and JSON interchange for features, predictions, gates, and reports.

CSV floats are written with 17 significant digits and JSON floats with
Python's shortest round-tripping repr, so every emitted artifact reloads
into exactly equal values. JSON documents carry a ``schema`` marker and are
written with sorted keys, which makes equal in-memory values serialize to
identical bytes.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from .config import RunConfig, format_log_base
from .errors import (
    DimensionMismatch,
    InvalidProbabilityRow,
    ParseError,
    RepCountMismatch,
)
from .feature_stats import FeatureMatrix, ReferenceStats
from .gating import EligibilityReport, GateSet
from .integration_monitor import CriterionCheck, IntegrationVerdict
from .perf_metrics import MetricBundle
from .pipeline import ReferenceDistribution
from .synthetic import LoopReport, SyntheticSpec
from .uncertainty import ROW_SUM_TOLERANCE, McPredictionSet

GATES_SCHEMA = "driftgate/gates-v1"
REPORTS_SCHEMA = "driftgate/reports-v1"
VERDICT_SCHEMA = "driftgate/verdict-v1"
LOOP_REPORT_SCHEMA = "driftgate/loop-report-v1"

CSV_FLOAT_FORMAT = "%.17g"

_METRIC_KEYS = ("auc", "accuracy", "sensitivity", "specificity", "entropy_threshold")


# ---------------------------------------------------------------------------
# JSON plumbing


def write_json(path: str | Path, document: dict) -> None:
    text = json.dumps(document, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_json(path: str | Path) -> dict:
    try:
        document = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(document, dict):
        raise ParseError("top-level JSON value must be an object")
    return document


def _require(document: dict, key: str, where: str):
    if key not in document:
        raise ParseError(f"{where} is missing the key {key!r}")
    return document[key]


# ---------------------------------------------------------------------------
# Feature CSVs


def _read_csv(path: str | Path, id_column: str | None = "id") -> pd.DataFrame:
    try:
        header = pd.read_csv(path, nrows=0)
        dtype = {id_column: str} if id_column in header.columns else None
        # round_trip: values written at 17 significant digits must reload
        # to the identical 64-bit float.
        return pd.read_csv(path, dtype=dtype, float_precision="round_trip")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty") from None
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        line = int(match.group(1)) if match else None
        raise ParseError(f"malformed CSV: {exc}", line=line) from None


def _int_column(frame: pd.DataFrame, name: str) -> np.ndarray:
    values = pd.to_numeric(frame[name], errors="coerce")
    bad = values.isna().to_numpy()
    if bad.any():
        raise ParseError(f"non-integer value in column {name!r}", line=int(np.argmax(bad)) + 2)
    arr = values.to_numpy()
    rounded = np.rint(arr)
    off = arr != rounded
    if off.any():
        raise ParseError(f"non-integer value in column {name!r}", line=int(np.argmax(off)) + 2)
    return rounded.astype(int)


def _float_block(frame: pd.DataFrame, columns: list[str], what: str) -> np.ndarray:
    try:
        data = frame[columns].to_numpy(dtype=float)
    except (ValueError, TypeError):
        for column in columns:
            coerced = pd.to_numeric(frame[column], errors="coerce")
            bad = (coerced.isna() & frame[column].notna()).to_numpy()
            if bad.any():
                raise ParseError(
                    f"non-numeric {what} value in column {column!r}",
                    line=int(np.argmax(bad)) + 2,
                ) from None
        raise
    finite = np.isfinite(data).all(axis=1)
    if not finite.all():
        raise ParseError(f"missing or non-finite {what} value", line=int(np.argmax(~finite)) + 2)
    return data


def load_features(path: str | Path, expected_dim: int | None = None) -> FeatureMatrix:
    """Read a feature cohort CSV with header ``id[,fold],f0,...,f{D-1}``.

    A file with only a header yields an empty cohort whose dimension comes
    from the header.

    Raises:
        ParseError: malformed structure, with the offending line when known.
        DimensionMismatch: the file's dimension differs from ``expected_dim``.
    """
    frame = _read_csv(path)
    columns = list(frame.columns)
    if not columns or columns[0] != "id":
        raise ParseError("first column must be 'id'", line=1)
    has_fold = len(columns) > 1 and columns[1] == "fold"
    feature_columns = columns[2:] if has_fold else columns[1:]
    if not feature_columns or feature_columns != [f"f{i}" for i in range(len(feature_columns))]:
        raise ParseError("feature columns must be f0..f{D-1} in order", line=1)
    dim = len(feature_columns)
    if expected_dim is not None and dim != expected_dim:
        raise DimensionMismatch(f"file has dimension {dim}, expected {expected_dim}")
    if frame.empty:
        return FeatureMatrix(ids=(), data=np.zeros((0, dim)))
    ids = tuple(frame["id"].astype(str))
    fold_tags = tuple(_int_column(frame, "fold")) if has_fold else None
    data = _float_block(frame, feature_columns, "feature")
    try:
        return FeatureMatrix(ids=ids, data=data, fold_tags=fold_tags)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def save_features(matrix: FeatureMatrix, path: str | Path) -> None:
    """Write a cohort back out in the load_features schema."""
    frame = pd.DataFrame(matrix.data, columns=[f"f{i}" for i in range(matrix.dim)])
    if matrix.fold_tags is not None:
        frame.insert(0, "fold", list(matrix.fold_tags))
    frame.insert(0, "id", list(matrix.ids))
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


# ---------------------------------------------------------------------------
# Prediction and label CSVs


def load_mc_predictions(path: str | Path, strict_reps: int | None = None) -> McPredictionSet:
    """Read replicate probability rows: ``id,rep,p0,p1[,label]``.

    Rows group by id in first-appearance order and sort by replicate index
    within each id. A label column must be consistent across an id's rows.

    Raises:
        ParseError: malformed structure.
        InvalidProbabilityRow: a probability row fails validation.
        RepCountMismatch: with ``strict_reps``, an id has a different count.
    """
    frame = _read_csv(path)
    columns = list(frame.columns)
    if columns[:2] != ["id", "rep"]:
        raise ParseError("replicate files start with columns id,rep", line=1)
    rest = columns[2:]
    has_label = bool(rest) and rest[-1] == "label"
    prob_columns = rest[:-1] if has_label else rest
    if len(prob_columns) < 2 or prob_columns != [f"p{i}" for i in range(len(prob_columns))]:
        raise ParseError("probability columns must be p0..p{C-1} in order", line=1)
    if frame.empty:
        raise ParseError("replicate file has no rows")
    ids = frame["id"].astype(str).to_numpy()
    reps = _int_column(frame, "rep")
    probs = _float_block(frame, prob_columns, "probability")

    outside = (probs < 0.0) | (probs > 1.0)
    if outside.any():
        line = int(np.argmax(outside.any(axis=1))) + 2
        raise InvalidProbabilityRow(f"line {line}: probability outside [0, 1]")
    sums = probs.sum(axis=1)
    off = np.abs(sums - 1.0) > ROW_SUM_TOLERANCE
    if off.any():
        line = int(np.argmax(off)) + 2
        raise InvalidProbabilityRow(
            f"line {line}: probabilities sum to {sums[np.argmax(off)]:.8f}, "
            f"outside tolerance {ROW_SUM_TOLERANCE:g}"
        )

    labels_column = _int_column(frame, "label") if has_label else None
    order: list[str] = []
    rows_for: dict[str, list[int]] = {}
    for index, sample_id in enumerate(ids):
        if sample_id not in rows_for:
            order.append(sample_id)
            rows_for[sample_id] = []
        rows_for[sample_id].append(index)

    matrices = []
    labels: list[int] = []
    for sample_id in order:
        indices = rows_for[sample_id]
        rep_ids = reps[indices]
        if len(set(rep_ids.tolist())) != len(indices):
            raise ParseError(f"duplicate replicate index for id {sample_id!r}")
        ordered = [indices[k] for k in np.argsort(rep_ids, kind="stable")]
        matrices.append(probs[ordered])
        if labels_column is not None:
            values = set(labels_column[indices].tolist())
            if len(values) != 1:
                raise ParseError(f"conflicting labels for id {sample_id!r}")
            labels.append(values.pop())

    if strict_reps is not None:
        for sample_id, matrix in zip(order, matrices):
            if matrix.shape[0] != strict_reps:
                raise RepCountMismatch(
                    f"id {sample_id!r} has {matrix.shape[0]} replicates, expected {strict_reps}"
                )
    return McPredictionSet(
        ids=tuple(order),
        replicates=tuple(matrices),
        labels=tuple(labels) if labels_column is not None else None,
    )


def load_labels(path: str | Path) -> dict[str, int]:
    """Read an ``id,label`` CSV into a mapping."""
    frame = _read_csv(path)
    if list(frame.columns) != ["id", "label"]:
        raise ParseError("label files have exactly the columns id,label", line=1)
    if frame.empty:
        raise ParseError("label file has no rows")
    ids = [str(v) for v in frame["id"]]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate ids in label file")
    return dict(zip(ids, (int(v) for v in _int_column(frame, "label"))))


# ---------------------------------------------------------------------------
# Config and spec documents


def load_config(path: str | Path) -> RunConfig:
    return RunConfig.from_dict(read_json(path))


def load_synthetic_spec(path: str | Path) -> SyntheticSpec:
    return SyntheticSpec.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# Gate documents


def _stats_to_dict(fold: int | None, stats: ReferenceStats) -> dict:
    return {
        "fold": fold,
        "mean": stats.mean.tolist(),
        "covariance": stats.covariance.tolist(),
        "inv_covariance": stats.inv_covariance.tolist(),
        "regularization_epsilon": stats.regularization_epsilon,
        "sample_count": stats.sample_count,
    }


def _stats_from_dict(raw: dict) -> tuple[int | None, ReferenceStats]:
    fold = raw.get("fold")
    try:
        stats = ReferenceStats(
            mean=np.asarray(_require(raw, "mean", "reference stats")),
            covariance=np.asarray(_require(raw, "covariance", "reference stats")),
            inv_covariance=np.asarray(_require(raw, "inv_covariance", "reference stats")),
            regularization_epsilon=_require(raw, "regularization_epsilon", "reference stats"),
            sample_count=_require(raw, "sample_count", "reference stats"),
        )
    except ValueError as exc:
        raise ParseError(f"invalid reference stats: {exc}") from None
    return (None if fold is None else int(fold)), stats


def gate_set_to_dict(gates: GateSet) -> dict:
    return {
        "euclidean_threshold": gates.euclidean_threshold,
        "cosine_threshold": gates.cosine_threshold,
        "mahalanobis_threshold": gates.mahalanobis_threshold,
        "entropy_threshold": gates.entropy_threshold,
        "provenance": dict(gates.provenance),
    }


def gate_set_from_dict(raw: dict) -> GateSet:
    try:
        return GateSet(
            euclidean_threshold=_require(raw, "euclidean_threshold", "gates"),
            cosine_threshold=_require(raw, "cosine_threshold", "gates"),
            mahalanobis_threshold=_require(raw, "mahalanobis_threshold", "gates"),
            entropy_threshold=raw.get("entropy_threshold"),
            provenance=dict(raw.get("provenance", {})),
        )
    except ValueError as exc:
        raise ParseError(f"invalid gate set: {exc}") from None


def gates_document(reference: ReferenceDistribution, gates: GateSet) -> dict:
    return {
        "schema": GATES_SCHEMA,
        "reference_stats": [
            _stats_to_dict(fold, stats) for fold, stats in zip(reference.folds, reference.stats)
        ],
        "gates": gate_set_to_dict(gates),
    }


def save_gates(path: str | Path, reference: ReferenceDistribution, gates: GateSet) -> None:
    write_json(path, gates_document(reference, gates))


def parse_gates_document(document: dict) -> tuple[ReferenceDistribution, GateSet]:
    if document.get("schema") != GATES_SCHEMA:
        raise ParseError(f"expected a {GATES_SCHEMA} document")
    entries = _require(document, "reference_stats", "gate document")
    if not isinstance(entries, list) or not entries:
        raise ParseError("reference_stats must be a non-empty list")
    folds = []
    stats = []
    for raw in entries:
        fold, entry = _stats_from_dict(raw)
        folds.append(fold)
        stats.append(entry)
    reference = ReferenceDistribution(folds=tuple(folds), stats=tuple(stats))
    gates = gate_set_from_dict(_require(document, "gates", "gate document"))
    return reference, gates


def load_gates(path: str | Path) -> tuple[ReferenceDistribution, GateSet]:
    return parse_gates_document(read_json(path))


def attach_entropy_threshold(document: dict, threshold: float, extra_provenance: dict) -> dict:
    """Add the entropy threshold to a loaded gate document.

    The update is additive: every already-present value object is reused, so
    the feature-stage numbers are carried through bit for bit.
    """
    gates = _require(document, "gates", "gate document")
    gates["entropy_threshold"] = float(threshold)
    provenance = gates.setdefault("provenance", {})
    provenance.update(extra_provenance)
    return document


# ---------------------------------------------------------------------------
# Reports, bundles, and verdicts


def eligibility_report_to_dict(report: EligibilityReport) -> dict:
    return {
        "id": report.id,
        "euclidean": report.triple.euclidean,
        "cosine": report.triple.cosine,
        "mahalanobis": report.triple.mahalanobis,
        "entropy": report.entropy,
        "pass_euclidean": report.pass_euclidean,
        "pass_cosine": report.pass_cosine,
        "pass_mahalanobis": report.pass_mahalanobis,
        "pass_entropy": report.pass_entropy,
        "eligible": report.eligible,
        "assigned_label": report.assigned_label,
    }


def save_reports(path: str | Path, reports: list[EligibilityReport]) -> None:
    write_json(
        path,
        {"schema": REPORTS_SCHEMA, "reports": [eligibility_report_to_dict(r) for r in reports]},
    )


def metric_bundle_to_dict(bundle: MetricBundle) -> dict:
    return asdict(bundle)


def metric_bundle_from_dict(raw: dict) -> MetricBundle:
    if not isinstance(raw, dict):
        raise ParseError("metric bundle must be a JSON object")
    unknown = set(raw) - set(_METRIC_KEYS)
    if unknown:
        raise ParseError(f"unknown metric keys: {sorted(unknown)}")
    try:
        return MetricBundle(**{key: _require(raw, key, "metric bundle") for key in _METRIC_KEYS})
    except ValueError as exc:
        raise ParseError(f"invalid metric bundle: {exc}") from None


def load_metric_bundle(path: str | Path) -> MetricBundle:
    return metric_bundle_from_dict(read_json(path))


def save_metric_bundle(path: str | Path, bundle: MetricBundle) -> None:
    write_json(path, metric_bundle_to_dict(bundle))


def verdict_to_dict(verdict: IntegrationVerdict) -> dict:
    return {
        "schema": VERDICT_SCHEMA,
        "image_id": verdict.image_id,
        "before": metric_bundle_to_dict(verdict.before),
        "after": metric_bundle_to_dict(verdict.after),
        "changes": dict(verdict.changes),
        "accepted": verdict.accepted,
        "reasons": [asdict(reason) for reason in verdict.reasons],
    }


def verdict_from_dict(raw: dict) -> IntegrationVerdict:
    try:
        return IntegrationVerdict(
            image_id=raw.get("image_id"),
            before=metric_bundle_from_dict(_require(raw, "before", "verdict")),
            after=metric_bundle_from_dict(_require(raw, "after", "verdict")),
            changes=dict(_require(raw, "changes", "verdict")),
            accepted=_require(raw, "accepted", "verdict"),
            reasons=tuple(
                CriterionCheck(**reason) for reason in _require(raw, "reasons", "verdict")
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid verdict: {exc}") from None


def save_verdict(path: str | Path, verdict: IntegrationVerdict) -> None:
    write_json(path, verdict_to_dict(verdict))


def load_verdict(path: str | Path) -> IntegrationVerdict:
    return verdict_from_dict(read_json(path))


def loop_report_to_dict(
    report: LoopReport, spec: SyntheticSpec | None = None, config: RunConfig | None = None
) -> dict:
    document = {
        "schema": LOOP_REPORT_SCHEMA,
        "gates": gate_set_to_dict(report.gates),
        "baseline_metrics": metric_bundle_to_dict(report.baseline_metrics),
        "misclassification_auc": report.misclassification_auc,
        "cohort_sizes": dict(report.cohort_sizes),
        "eligibility": [eligibility_report_to_dict(r) for r in report.eligibility],
        "verdicts": [verdict_to_dict(v) for v in report.verdicts],
    }
    if spec is not None:
        document["spec"] = spec.to_dict()
    if config is not None:
        document["config"] = config.to_dict()
    return document


def save_loop_report(
    path: str | Path,
    report: LoopReport,
    spec: SyntheticSpec | None = None,
    config: RunConfig | None = None,
) -> None:
    write_json(path, loop_report_to_dict(report, spec, config))
