"""Fold-aware stage orchestration shared by the command-line workflows."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import ConfigError
from .feature_stats import (
    DistanceTriple,
    FeatureMatrix,
    ReferenceStats,
    aggregate_over_folds,
    batch_distance_triples,
    compute_reference_stats,
)


@dataclass(frozen=True)
class ReferenceDistribution:
    """Per-fold reference stats; a single None fold when no tags exist."""

    folds: tuple[int | None, ...]
    stats: tuple[ReferenceStats, ...]

    def __post_init__(self) -> None:
        if len(self.folds) != len(self.stats) or not self.folds:
            raise ValueError("one stats entry per fold is required")
        if len(set(self.folds)) != len(self.folds):
            raise ValueError("duplicate folds in reference distribution")
        dims = {s.dim for s in self.stats}
        if len(dims) > 1:
            raise ValueError(f"inconsistent dimensions across folds: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.stats[0].dim


def split_by_fold(matrix: FeatureMatrix) -> list[tuple[int | None, FeatureMatrix]]:
    """Per-fold sub-matrices in ascending fold order; passthrough when untagged."""
    if matrix.fold_tags is None:
        return [(None, matrix)]
    out = []
    tags = np.asarray(matrix.fold_tags)
    for fold in sorted(set(matrix.fold_tags)):
        mask = tags == fold
        ids = tuple(np.asarray(matrix.ids, dtype=object)[mask])
        out.append((int(fold), FeatureMatrix(ids=ids, data=matrix.data[mask])))
    return out


def mean_features_by_id(matrix: FeatureMatrix) -> FeatureMatrix:
    """Average each id's rows across folds, keeping first-appearance order."""
    if matrix.fold_tags is None:
        return matrix
    order: list[str] = []
    rows: dict[str, list[np.ndarray]] = {}
    for sample_id, row in zip(matrix.ids, matrix.data):
        if sample_id not in rows:
            order.append(sample_id)
            rows[sample_id] = []
        rows[sample_id].append(row)
    data = np.stack([np.mean(rows[sample_id], axis=0) for sample_id in order])
    return FeatureMatrix(ids=tuple(order), data=data)


def fit_reference(matrix: FeatureMatrix, config: RunConfig) -> ReferenceDistribution:
    """Reference stats for a base cohort, per fold or fold-collapsed.

    Under "mean-of-features" the per-id fold average is computed first and a
    single stats entry is returned; under "mean-of-distances" one entry per
    fold is returned.
    """
    if config.fold_aggregation == "mean-of-features":
        collapsed = mean_features_by_id(matrix)
        return ReferenceDistribution(
            folds=(None,), stats=(compute_reference_stats(collapsed, config.epsilon_scale),)
        )
    folds = []
    stats = []
    for fold, sub in split_by_fold(matrix):
        folds.append(fold)
        stats.append(compute_reference_stats(sub, config.epsilon_scale))
    return ReferenceDistribution(folds=tuple(folds), stats=tuple(stats))


def triples_by_id(
    matrix: FeatureMatrix,
    reference: ReferenceDistribution,
    config: RunConfig,
    max_workers: int = 1,
) -> tuple[list[str], list[DistanceTriple]]:
    """One distance triple per sample id, honoring the fold aggregation mode.

    Under "mean-of-distances", tagged rows are scored against their own
    fold's stats and untagged rows against every fold; the per-fold triples
    are then averaged per id. Ids keep first-appearance order.

    Raises:
        ConfigError: a row's fold has no reference stats.
    """
    if matrix.n_samples == 0:
        return [], []
    if config.fold_aggregation == "mean-of-features":
        collapsed = mean_features_by_id(matrix)
        triples = batch_distance_triples(collapsed, reference.stats[0], max_workers)
        return list(collapsed.ids), triples

    stats_by_fold = dict(zip(reference.folds, reference.stats))
    order: list[str] = []
    per_id: dict[str, list[DistanceTriple]] = {}

    def add(ids: tuple[str, ...], triples: list[DistanceTriple]) -> None:
        for sample_id, triple in zip(ids, triples):
            if sample_id not in per_id:
                order.append(sample_id)
                per_id[sample_id] = []
            per_id[sample_id].append(triple)

    if matrix.fold_tags is None:
        # Untagged rows are scored against every reference fold.
        for stats in reference.stats:
            add(matrix.ids, batch_distance_triples(matrix, stats, max_workers))
    else:
        for fold, sub in split_by_fold(matrix):
            if fold not in stats_by_fold:
                raise ConfigError(f"fold {fold} has no reference stats in the gate file")
            add(sub.ids, batch_distance_triples(sub, stats_by_fold[fold], max_workers))
        # Keep the order samples first appear in the file, not fold order.
        first_seen = {sample_id: i for i, sample_id in reversed(list(enumerate(matrix.ids)))}
        order.sort(key=lambda sample_id: first_seen[sample_id])
    return order, [aggregate_over_folds(per_id[sample_id]) for sample_id in order]
