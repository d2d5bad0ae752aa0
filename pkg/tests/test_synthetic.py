"""Tests for the synthetic cohort generator and the end-to-end loop."""

from __future__ import annotations

import json

import numpy as np
import pytest

from driftgate import (
    ConfigError,
    RunConfig,
    SyntheticSpec,
    ToyLearner,
    generate,
    run_monitor_loop,
    toy_mc_predict,
)
from driftgate.io_formats import loop_report_to_dict

FAST_SPEC = SyntheticSpec(seed=7, dim=6, n_base=400, n_test=300, n_candidates=8, mc_replicates=40)


def test_generate_is_reproducible_per_seed() -> None:
    first = generate(FAST_SPEC)
    second = generate(FAST_SPEC)
    np.testing.assert_array_equal(first.base.data, second.base.data)
    np.testing.assert_array_equal(first.test.data, second.test.data)
    np.testing.assert_array_equal(first.candidates.data, second.candidates.data)
    np.testing.assert_array_equal(first.base_labels, second.base_labels)

    other = generate(SyntheticSpec(seed=8, dim=6, n_base=400, n_test=300, n_candidates=8))
    assert not np.array_equal(first.base.data, other.base.data)


def test_cohorts_use_distinct_streams() -> None:
    cohorts = generate(FAST_SPEC)
    n = min(cohorts.base.n_samples, cohorts.test.n_samples)
    assert not np.array_equal(cohorts.base.data[:n], cohorts.test.data[:n])


def test_per_class_sample_means_recover_class_means() -> None:
    spec = SyntheticSpec(seed=11, dim=8, n_base=4000, n_test=2, n_candidates=0)
    cohorts = generate(spec)
    means = spec.resolved_class_means()
    for label in (0, 1):
        rows = cohorts.base.data[cohorts.base_labels == label]
        np.testing.assert_allclose(rows.mean(axis=0), means[label], atol=0.15)


def test_mixture_covariance_approaches_population_covariance() -> None:
    spec = SyntheticSpec(seed=13, dim=8, n_base=2000, n_test=2, n_candidates=0)
    cohorts = generate(spec)
    empirical = np.cov(cohorts.base.data, rowvar=False)
    population = spec.population_covariance()
    gap = np.linalg.norm(empirical - population) / np.linalg.norm(population)
    assert gap < 0.10


def test_drift_moves_only_the_flagged_candidates() -> None:
    offset = (50.0,) * 6
    spec = SyntheticSpec(
        seed=17, dim=6, n_base=100, n_test=100, n_candidates=40,
        drift_offset=offset, drift_fraction=0.5,
    )
    drifted = generate(spec)
    clean = generate(SyntheticSpec(seed=17, dim=6, n_base=100, n_test=100, n_candidates=40))
    assert 0 < drifted.candidate_drifted.sum() < 40
    delta = drifted.candidates.data - clean.candidates.data
    expected = np.broadcast_to(offset, delta[drifted.candidate_drifted].shape)
    np.testing.assert_allclose(delta[drifted.candidate_drifted], expected, atol=1e-12)
    np.testing.assert_allclose(delta[~drifted.candidate_drifted], 0.0, atol=1e-12)


def test_spec_round_trips_and_rejects_unknown_keys() -> None:
    spec = SyntheticSpec(seed=3, dim=4, n_base=50, n_test=40, n_candidates=2,
                         drift_offset=(1.0, 0.0, 0.0, 0.0), drift_fraction=0.25)
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError):
        SyntheticSpec.from_dict({"seed": 3, "n_images": 9})
    with pytest.raises(ConfigError):
        SyntheticSpec(dim=1)
    with pytest.raises(ConfigError):
        SyntheticSpec(drift_fraction=1.5)
    with pytest.raises(ConfigError):
        SyntheticSpec(drift_offset=(1.0,))  # wrong length for dim=8


def test_toy_learner_recovers_the_generating_geometry() -> None:
    cohorts = generate(SyntheticSpec(seed=19, dim=6, n_base=2000, n_test=2, n_candidates=0))
    learner = ToyLearner.fit(cohorts.base.data, cohorts.base_labels)
    probs = learner.predict_proba(cohorts.base.data)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    accuracy = float((learner.predict(cohorts.base.data) == cohorts.base_labels).mean())
    assert accuracy > 0.85


def test_toy_learner_is_balanced_at_the_centroid_midpoint() -> None:
    rng = np.random.default_rng(23)
    n_half = 60
    means = np.array([[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]])
    labels = np.array([0] * n_half + [1] * n_half)
    features = means[labels] + rng.standard_normal((2 * n_half, 3))
    learner = ToyLearner.fit(features, labels)
    # Balanced counts give zero prior log odds, so the midpoint logit is 0.
    midpoint = learner.class_means.mean(axis=0)
    assert learner.prior_log_odds == 0.0
    assert learner.logit(midpoint) == 0.0


def test_toy_mc_predict_zero_noise_repeats_one_row() -> None:
    cohorts = generate(FAST_SPEC)
    learner = ToyLearner.fit(cohorts.base.data, cohorts.base_labels)
    rows = toy_mc_predict(learner, cohorts.base.data[0], replicates=16, noise_scale=0.0, seed=5)
    assert rows.shape == (16, 2)
    np.testing.assert_array_equal(rows, np.tile(rows[0], (16, 1)))
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)


def test_toy_mc_predict_is_confident_far_from_the_boundary() -> None:
    cohorts = generate(FAST_SPEC)
    learner = ToyLearner.fit(cohorts.base.data, cohorts.base_labels)
    means = FAST_SPEC.resolved_class_means()
    deep_class_0 = means[0] - 5.0 * (means[1] - means[0])
    rows = toy_mc_predict(learner, deep_class_0, replicates=200, noise_scale=1.0, seed=5)
    assert rows[:, 0].mean() > 0.99


def test_toy_mc_predict_is_uncertain_at_the_midpoint() -> None:
    cohorts = generate(FAST_SPEC)
    learner = ToyLearner.fit(cohorts.base.data, cohorts.base_labels)
    midpoint = learner.class_means.mean(axis=0)
    rows = toy_mc_predict(learner, midpoint, replicates=4000, noise_scale=1.0, seed=5)
    assert rows[:, 1].mean() == pytest.approx(0.5, abs=0.05)


def test_monitor_loop_serializes_bit_identically_across_runs() -> None:
    config = RunConfig()
    first = run_monitor_loop(FAST_SPEC, config)
    second = run_monitor_loop(FAST_SPEC, config)
    first_doc = json.dumps(loop_report_to_dict(first, FAST_SPEC, config), sort_keys=True)
    second_doc = json.dumps(loop_report_to_dict(second, FAST_SPEC, config), sort_keys=True)
    assert first_doc == second_doc


def test_monitor_loop_on_clean_candidates() -> None:
    report = run_monitor_loop(FAST_SPEC)
    assert report.cohort_sizes == {"base": 400, "test": 300, "candidates": 8}
    assert len(report.eligibility) == 8
    assert report.gates.complete
    assert 0.5 < report.misclassification_auc <= 1.0
    assert report.baseline_metrics.accuracy > 0.8
    assert report.baseline_metrics.auc > 0.85
    eligible = [r for r in report.eligibility if r.eligible]
    assert len(report.verdicts) == len(eligible)
    for verdict, eligibility in zip(report.verdicts, eligible):
        assert verdict.image_id == eligibility.id
        # One in-distribution sample cannot move metrics on a 400-row base.
        assert verdict.accepted


def test_monitor_loop_with_zero_candidates() -> None:
    spec = SyntheticSpec(seed=7, dim=6, n_base=400, n_test=300, n_candidates=0, mc_replicates=40)
    report = run_monitor_loop(spec)
    assert report.eligibility == ()
    assert report.verdicts == ()
    assert report.gates.complete


def test_monitor_loop_blocks_fully_drifted_candidates() -> None:
    spec = SyntheticSpec(
        seed=29, dim=8, n_base=800, n_test=400, n_candidates=200,
        drift_offset=(5.0,) * 8, drift_fraction=1.0, mc_replicates=20,
    )
    report = run_monitor_loop(spec)
    eligible = sum(r.eligible for r in report.eligibility)
    assert eligible / len(report.eligibility) < 0.05
