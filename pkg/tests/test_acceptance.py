"""Acceptance suite: one test per shipped guarantee.

Each criterion is a single test function printing one [criterion NN] line
when it passes (visible under ``pytest -s``). Tolerances and runtime
budgets are pinned in the asserts.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from driftgate import (
    DistanceTriple,
    FeatureMatrix,
    GateSet,
    MetricBundle,
    ReferenceStats,
    SyntheticSpec,
    UncertaintySummary,
    batch_distance_triples,
    binary_auc,
    calibrate_feature_gates,
    compute_reference_stats,
    distance_triple,
    evaluate_candidate,
    generate,
    misclassification_roc,
    percent_change,
    predictive_entropy,
    render_verdict,
    run_monitor_loop,
    summarize,
    youden_threshold,
)
from driftgate.cli import EXIT_OK, main
from driftgate.io_formats import read_json, write_json

# Gate thresholds and candidate rows recorded from a deployed calibration run.
RECORDED_GATES = GateSet(
    euclidean_threshold=18.47,
    cosine_threshold=0.7476,
    mahalanobis_threshold=25.10,
    entropy_threshold=0.24682,
)

# (id, euclidean, cosine, mahalanobis, entropy)
RECORDED_CANDIDATES = (
    ("6", 13.29, 0.8345, 18.81, 0.00911),
    ("28", 11.93, 0.8371, 18.08, 0.00197),
    ("57", 11.99, 0.8688, 17.36, 0.11661),
    ("62", 11.15, 0.8454, 16.11, 0.01079),
    ("70", 13.99, 0.8114, 21.19, 0.00711),
)

# Common pre-integration baseline consistent with every recorded verdict row.
RECORDED_BASELINE = MetricBundle(
    auc=0.9182,
    accuracy=0.8906,
    sensitivity=0.6265,
    specificity=0.9552,
    entropy_threshold=0.24682,
)

# (id, after-bundle, recorded % change of the entropy threshold)
RECORDED_INTEGRATIONS = (
    ("6", MetricBundle(0.9201, 0.8898, 0.5992, 0.9610, 0.032), -87.08),
    ("28", MetricBundle(0.9206, 0.8914, 0.6109, 0.9600, 0.165), -33.10),
    ("57", MetricBundle(0.9203, 0.8898, 0.6070, 0.9590, 0.200), -18.78),
    ("62", MetricBundle(0.9206, 0.8906, 0.6070, 0.9600, 0.237), -3.94),
    ("70", MetricBundle(0.9199, 0.8906, 0.6031, 0.9610, 0.024), -90.14),
)

# 5-sigma shift orthogonal to the class-mean axis of the default generator.
DRIFT_OFFSET_8D = tuple(5.0 * v / math.sqrt(8.0) for v in (1.0, -1.0) * 4)


def summary_with(sample_id: str, entropy: float, predicted: int = 1) -> UncertaintySummary:
    probs = np.array([0.25, 0.75]) if predicted == 1 else np.array([0.75, 0.25])
    return UncertaintySummary(
        id=sample_id, mean_probs=probs, entropy=entropy, predicted_class=predicted
    )


def oracle_pair_auc(scores, labels) -> float:
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l != 1]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def sweep_youden(entropies, wrong) -> float:
    """Exhaustive Youden search over midpoint thresholds, smallest tau on ties."""
    distinct = sorted(set(entropies))
    candidates = (
        [-math.inf]
        + [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
        + [math.inf]
    )
    n_pos = sum(wrong)
    n_neg = len(wrong) - n_pos
    best_tau = -math.inf
    best_j = -math.inf
    for tau in candidates:  # ascending
        tp = sum(1 for s, w in zip(entropies, wrong) if w and s >= tau)
        fp = sum(1 for s, w in zip(entropies, wrong) if not w and s >= tau)
        j = tp / n_pos - fp / n_neg
        if j > best_j:
            best_j = j
            best_tau = tau
    return best_tau


def test_criterion_01_recorded_candidates_pass_every_gate() -> None:
    start = time.perf_counter()
    for sample_id, euclidean, cosine, mahalanobis, entropy in RECORDED_CANDIDATES:
        report = evaluate_candidate(
            DistanceTriple(euclidean, cosine, mahalanobis),
            summary_with(sample_id, entropy),
            RECORDED_GATES,
        )
        assert report.eligible, sample_id
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    print(f"\n[criterion 01] PASS 5/5 recorded candidates eligible ({elapsed:.3f}s)")


def test_criterion_02_recorded_integrations_all_accepted() -> None:
    start = time.perf_counter()
    for sample_id, after, recorded_change in RECORDED_INTEGRATIONS:
        change = percent_change(after.entropy_threshold, RECORDED_BASELINE.entropy_threshold)
        assert change == pytest.approx(recorded_change, abs=0.25), sample_id
        verdict = render_verdict(RECORDED_BASELINE, after, tolerance_pct=5.0, image_id=sample_id)
        assert verdict.accepted, sample_id
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    print(f"\n[criterion 02] PASS 5/5 integrations accepted, threshold changes within 0.25pp ({elapsed:.3f}s)")


def test_criterion_03_rank_sum_auc_equals_pair_oracle() -> None:
    start = time.perf_counter()
    rng = np.random.default_rng(2003)
    for _ in range(200):
        n = int(rng.integers(4, 201))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        # Coarse grid keeps ties frequent.
        scores = (rng.integers(0, 8, size=n) / 7.0).tolist()
        got = binary_auc(scores, labels.tolist())
        want = oracle_pair_auc(scores, labels.tolist())
        assert abs(got - want) <= 1e-12
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"\n[criterion 03] PASS rank-sum AUC == pair oracle on 200 instances ({elapsed:.2f}s)")


def test_criterion_04_youden_threshold_equals_exhaustive_sweep() -> None:
    start = time.perf_counter()
    rng = np.random.default_rng(2004)
    for case in range(200):
        n = int(rng.integers(4, 120))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1  # predicted class is always 1 below
        if case % 3 == 0:
            entropies = (rng.integers(0, 6, size=n) / 10.0).tolist()
        else:
            entropies = rng.uniform(0.0, 0.69, size=n).tolist()
        summaries = [summary_with(f"s{i}", entropies[i]) for i in range(n)]
        label_map = {f"s{i}": int(labels[i]) for i in range(n)}
        curve = misclassification_roc(summaries, label_map)
        got = youden_threshold(curve)
        wrong = [int(labels[i]) != 1 for i in range(n)]
        assert got == sweep_youden(entropies, wrong)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"\n[criterion 04] PASS Youden == exhaustive sweep on 200 instances ({elapsed:.2f}s)")


def test_criterion_05_mahalanobis_reduces_and_is_affine_invariant() -> None:
    start = time.perf_counter()
    rng = np.random.default_rng(2005)

    for _ in range(50):
        dim = int(rng.integers(2, 7))
        mean = rng.normal(size=dim)
        stats = ReferenceStats(
            mean=mean,
            covariance=np.eye(dim),
            inv_covariance=np.eye(dim),
            regularization_epsilon=0.0,
            sample_count=10,
        )
        x = rng.normal(size=dim) + 0.1  # keep away from the zero vector
        triple = distance_triple(x, stats)
        assert abs(triple.mahalanobis - triple.euclidean) <= 1e-9

    for _ in range(50):
        dim = int(rng.integers(3, 7))
        n = int(rng.integers(50, 300))
        data = rng.normal(size=(n, dim)) @ rng.normal(size=(dim, dim)) + rng.normal(size=dim)
        q1, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        q2, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        transform = q1 @ np.diag(rng.uniform(0.5, 2.0, size=dim)) @ q2
        shift = rng.normal(size=dim)

        matrix = FeatureMatrix(ids=tuple(f"r{i}" for i in range(n)), data=data)
        mapped = FeatureMatrix(
            ids=matrix.ids, data=data @ transform.T + shift
        )
        # The exact property needs the unregularized inverse.
        stats = compute_reference_stats(matrix, epsilon_scale=0.0)
        mapped_stats = compute_reference_stats(mapped, epsilon_scale=0.0)
        x = rng.normal(size=dim)
        original = distance_triple(x, stats).mahalanobis
        moved = distance_triple(transform @ x + shift, mapped_stats).mahalanobis
        assert abs(moved - original) <= 1e-6 * max(original, 1e-12)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"\n[criterion 05] PASS identity reduction and affine invariance ({elapsed:.2f}s)")


def test_criterion_06_percentile_gates_hold_their_nominal_rates() -> None:
    start = time.perf_counter()
    base = generate(SyntheticSpec(seed=11, dim=8, n_base=2000, n_test=2, n_candidates=0)).base
    fresh = generate(SyntheticSpec(seed=12, dim=8, n_base=1000, n_test=2, n_candidates=0)).base
    stats = compute_reference_stats(base)
    gates = calibrate_feature_gates(batch_distance_triples(base, stats))

    fresh_triples = batch_distance_triples(fresh, stats)
    euclid_rate = np.mean([t.euclidean <= gates.euclidean_threshold for t in fresh_triples])
    cosine_rate = np.mean([t.cosine >= gates.cosine_threshold for t in fresh_triples])
    mahal_rate = np.mean([t.mahalanobis <= gates.mahalanobis_threshold for t in fresh_triples])
    for rate in (euclid_rate, cosine_rate, mahal_rate):
        assert 0.75 <= rate <= 0.85  # nominal 0.80 +/- 5pp

    drifted = FeatureMatrix(ids=fresh.ids, data=fresh.data + np.asarray(DRIFT_OFFSET_8D))
    drifted_triples = batch_distance_triples(drifted, stats)
    joint_rate = np.mean([
        t.euclidean <= gates.euclidean_threshold
        and t.cosine >= gates.cosine_threshold
        and t.mahalanobis <= gates.mahalanobis_threshold
        for t in drifted_triples
    ])
    assert joint_rate < 0.05
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(
        f"\n[criterion 06] PASS in-dist rates ({euclid_rate:.3f}, {cosine_rate:.3f}, "
        f"{mahal_rate:.3f}), drifted joint {joint_rate:.3f} ({elapsed:.2f}s)"
    )


def test_criterion_07_simulate_cli_end_to_end(tmp_path: Path) -> None:
    start = time.perf_counter()
    clean_spec = tmp_path / "clean_spec.json"
    write_json(clean_spec, SyntheticSpec().to_dict())
    first = tmp_path / "first.json"
    second = tmp_path / "second.json"
    assert main(["simulate", "--spec", str(clean_spec), "--out", str(first)]) == EXIT_OK
    assert main(["simulate", "--spec", str(clean_spec), "--out", str(second)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    document = read_json(first)
    accepted = [v for v in document["verdicts"] if v["accepted"]]
    assert len(accepted) >= 1

    drift_spec = tmp_path / "drift_spec.json"
    write_json(
        drift_spec,
        SyntheticSpec(drift_offset=DRIFT_OFFSET_8D, drift_fraction=1.0).to_dict(),
    )
    drifted_out = tmp_path / "drifted.json"
    main(["simulate", "--spec", str(drift_spec), "--out", str(drifted_out)])
    drifted_doc = read_json(drifted_out)
    assert not any(r["eligible"] for r in drifted_doc["eligibility"])
    assert drifted_doc["verdicts"] == []
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    print(
        f"\n[criterion 07] PASS {len(accepted)} accepted clean integrations, "
        f"0 drifted eligible, bit-identical reruns ({elapsed:.2f}s)"
    )


def test_criterion_08_entropy_properties() -> None:
    start = time.perf_counter()
    assert predictive_entropy(np.array([0.0, 1.0])) == 0.0
    assert predictive_entropy(np.array([1.0, 0.0, 0.0, 0.0])) == 0.0
    assert abs(predictive_entropy(np.array([0.5, 0.5])) - math.log(2.0)) <= 1e-12

    rng = np.random.default_rng(2008)
    for _ in range(100):
        n_classes = int(rng.integers(2, 6))
        probs = rng.dirichlet(np.ones(n_classes))
        permuted = probs[rng.permutation(n_classes)]
        assert abs(predictive_entropy(probs) - predictive_entropy(permuted)) <= 1e-12

        reps = rng.dirichlet(np.ones(n_classes), size=12)
        shuffled = reps[rng.permutation(12)]
        one = summarize(reps, sample_id="x")
        other = summarize(shuffled, sample_id="x")
        assert abs(one.entropy - other.entropy) <= 1e-12
        np.testing.assert_allclose(one.mean_probs, other.mean_probs, rtol=0, atol=1e-12)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(f"\n[criterion 08] PASS entropy identities and invariances ({elapsed:.2f}s)")


def test_criterion_09_entropy_separates_misclassification() -> None:
    start = time.perf_counter()
    aucs = []
    for seed in (1, 2, 3, 4, 5):
        spec = SyntheticSpec(
            seed=seed, dim=8, n_base=1200, n_test=800, n_candidates=0, mc_replicates=100
        )
        report = run_monitor_loop(spec)
        aucs.append(report.misclassification_auc)
        assert report.misclassification_auc > 0.8, seed
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(
        f"\n[criterion 09] PASS misclassification AUC in "
        f"[{min(aucs):.3f}, {max(aucs):.3f}] across 5 seeds ({elapsed:.2f}s)"
    )


def test_criterion_10_baseline_handles_deployment_scale_input(tmp_path: Path) -> None:
    rng = np.random.default_rng(2010)
    n, dim = 10_000, 512
    frame = pd.DataFrame(
        rng.normal(size=(n, dim)).astype(float), columns=[f"f{i}" for i in range(dim)]
    )
    frame.insert(0, "id", [f"s{i}" for i in range(n)])
    features_csv = tmp_path / "big.csv"
    frame.to_csv(features_csv, index=False, float_format="%.17g")

    gates_json = tmp_path / "gates.json"
    start = time.perf_counter()
    code = main(["baseline", "--features", str(features_csv), "--out", str(gates_json)])
    elapsed = time.perf_counter() - start
    assert code == EXIT_OK
    assert elapsed < 10.0
    document = read_json(gates_json)
    assert document["gates"]["provenance"]["base_count"] == n
    print(f"\n[criterion 10] PASS baseline on {n}x{dim} in {elapsed:.2f}s")
