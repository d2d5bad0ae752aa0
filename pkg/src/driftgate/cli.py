"""Command-line entry points for the three-stage monitoring workflow.

Exit codes: 0 success, 2 usage or input errors, 3 when ``gate`` finds no
eligible candidate, 4 when ``verdict`` rejects the update.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import RunConfig, format_log_base, parse_log_base
from .errors import ConfigError, DriftGateError
from .feature_stats import calibrate_feature_gates
from .gating import batch_evaluate
from .integration_monitor import render_verdict
from .io_formats import (
    attach_entropy_threshold,
    load_config,
    load_features,
    load_gates,
    load_labels,
    load_metric_bundle,
    load_mc_predictions,
    load_synthetic_spec,
    parse_gates_document,
    read_json,
    save_gates,
    save_loop_report,
    save_reports,
    save_verdict,
    write_json,
)
from .pipeline import fit_reference, triples_by_id
from .synthetic import SyntheticSpec, run_monitor_loop
from .uncertainty import misclassification_roc, youden_threshold

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_ELIGIBLE = 3
EXIT_REJECTED = 4

THREADS_ENV_VAR = "DRIFTGATE_THREADS"


def thread_cap() -> int:
    """Worker cap from the environment; 1 when unset."""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}") from None
    if cap < 1:
        raise ConfigError(f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}")
    return cap


def _load_run_config(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def cmd_baseline(args: argparse.Namespace) -> int:
    config = _load_run_config(args.config)
    features = load_features(args.features)
    reference = fit_reference(features, config)
    ids, triples = triples_by_id(features, reference, config, thread_cap())
    gates = calibrate_feature_gates(
        triples,
        config.pct_euclidean,
        config.pct_cosine,
        config.pct_mahalanobis,
        extra_provenance={
            "epsilon_scale": config.epsilon_scale,
            "entropy_log_base": format_log_base(config.entropy_log_base),
            "fold_aggregation": config.fold_aggregation,
            "folds": [fold for fold in reference.folds],
        },
    )
    save_gates(args.out, reference, gates)
    print(
        f"calibrated feature gates on {len(ids)} samples "
        f"(euclidean <= {gates.euclidean_threshold:.6g}, "
        f"cosine >= {gates.cosine_threshold:.6g}, "
        f"mahalanobis <= {gates.mahalanobis_threshold:.6g})"
    )
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    document = read_json(args.gates)
    reference, gates = parse_gates_document(document)
    predictions = load_mc_predictions(args.mc, strict_reps=args.strict_reps)
    if args.labels:
        labels = load_labels(args.labels)
    elif predictions.labels is not None:
        labels = predictions.label_map()
    else:
        raise ConfigError("no labels: pass --labels or include a label column in the MC file")
    log_base = parse_log_base(gates.provenance.get("entropy_log_base", "e"))
    summaries = predictions.summaries(log_base=log_base)
    curve = misclassification_roc(summaries, labels)
    threshold = youden_threshold(curve)
    attach_entropy_threshold(
        document,
        threshold,
        {
            "test_count": len(summaries),
            "misclassification_auc": curve.auc,
        },
    )
    write_json(args.out, document)
    print(f"misclassification ROC AUC {curve.auc:.4f} on {len(summaries)} samples")
    print(f"entropy threshold {threshold:.6g}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gate(args: argparse.Namespace) -> int:
    reference, gates = load_gates(args.gates)
    if not gates.complete:
        raise ConfigError("gate file has no entropy threshold; run calibrate first")
    config = RunConfig(
        entropy_log_base=parse_log_base(gates.provenance.get("entropy_log_base", "e")),
        fold_aggregation=gates.provenance.get("fold_aggregation", "mean-of-distances"),
    )
    features = load_features(args.features, expected_dim=reference.dim)
    ids, triples = triples_by_id(features, reference, config, thread_cap())
    if not ids:
        save_reports(args.out, [])
        print("no candidates to gate")
        print(f"wrote {args.out}")
        return EXIT_NO_ELIGIBLE
    predictions = load_mc_predictions(args.mc, strict_reps=args.strict_reps)
    summary_by_id = {s.id: s for s in predictions.summaries(log_base=config.entropy_log_base)}
    missing = [sample_id for sample_id in ids if sample_id not in summary_by_id]
    if missing:
        raise ConfigError(f"candidates without replicate predictions: {missing[:5]}")
    reports = batch_evaluate(
        [(triple, summary_by_id[sample_id]) for sample_id, triple in zip(ids, triples)], gates
    )
    save_reports(args.out, reports)
    eligible = sum(r.eligible for r in reports)
    print(f"{eligible} of {len(reports)} candidates eligible")
    print(f"wrote {args.out}")
    return EXIT_OK if eligible else EXIT_NO_ELIGIBLE


def cmd_verdict(args: argparse.Namespace) -> int:
    config = _load_run_config(args.config)
    before = load_metric_bundle(args.before)
    after = load_metric_bundle(args.after)
    verdict = render_verdict(before, after, config.safeguard_tolerance_pct)
    save_verdict(args.out, verdict)
    if verdict.accepted:
        print("accepted: every metric change is within the safeguard")
    else:
        failed = [r for r in verdict.reasons if not r.passed]
        print("rejected:")
        for reason in failed:
            print(f"  {reason.detail}")
    print(f"wrote {args.out}")
    return EXIT_OK if verdict.accepted else EXIT_REJECTED


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_synthetic_spec(args.spec) if args.spec else SyntheticSpec()
    config = _load_run_config(args.config)
    report = run_monitor_loop(spec, config)
    save_loop_report(args.out, report, spec, config)
    eligible = sum(r.eligible for r in report.eligibility)
    accepted = sum(v.accepted for v in report.verdicts)
    print(
        f"simulated {report.cohort_sizes['candidates']} candidates: "
        f"{eligible} eligible, {accepted} of {len(report.verdicts)} integrations accepted"
    )
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftgate",
        description=(
            "Continuous monitoring for model updates: calibrate feature-distribution "
            "gates, add an uncertainty threshold, gate candidates, and judge retrained "
            "models under a percent-change safeguard."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("baseline", help="fit reference stats and feature gates from a base cohort")
    p.add_argument("--features", required=True, help="base cohort CSV (id[,fold],f0..)")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--out", required=True, help="gate file to write")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("calibrate", help="add the entropy threshold to an existing gate file")
    p.add_argument("--mc", required=True, help="replicate predictions CSV (id,rep,p0,p1[,label])")
    p.add_argument("--labels", help="labels CSV (id,label); optional if the MC file has labels")
    p.add_argument("--gates", required=True, help="gate file from baseline")
    p.add_argument("--strict-reps", type=int, help="require exactly this many replicates per id")
    p.add_argument("--out", required=True, help="gate file to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("gate", help="evaluate candidates against a calibrated gate file")
    p.add_argument("--features", required=True, help="candidate features CSV")
    p.add_argument("--mc", required=True, help="candidate replicate predictions CSV")
    p.add_argument("--gates", required=True, help="calibrated gate file")
    p.add_argument("--strict-reps", type=int, help="require exactly this many replicates per id")
    p.add_argument("--out", required=True, help="eligibility report file to write")
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("verdict", help="judge retrained metrics against the baseline bundle")
    p.add_argument("--before", required=True, help="baseline metric bundle JSON")
    p.add_argument("--after", required=True, help="post-update metric bundle JSON")
    p.add_argument("--config", help="run config JSON (sets the safeguard tolerance)")
    p.add_argument("--out", required=True, help="verdict file to write")
    p.set_defaults(func=cmd_verdict)

    p = sub.add_parser("simulate", help="run the full loop on synthetic cohorts")
    p.add_argument("--spec", help="synthetic spec JSON; defaults are documented in the README")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--out", required=True, help="loop report file to write")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DriftGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
