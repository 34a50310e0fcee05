"""Tie-aware rank statistics and grouped Spearman correlations.

Spearman is computed as the Pearson correlation of average-tie ranks
(the 6*sum(d^2) shortcut is wrong under ties). Groups are correlated
independently; output ordering is deterministic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .metrics import ModelMetrics
from .store import RunRecord

log = logging.getLogger(__name__)

TARGETS = ("test_accuracy", "generalization_gap")

MIN_GROUP_SIZE = 3


class NonFinite(ValueError):
    """Rank input contains NaN or Inf."""


class LengthMismatch(ValueError):
    pass


class ConstantInput(ValueError):
    """Correlation of a constant vector is undefined."""


@dataclass(frozen=True)
class RankVector:
    ranks: np.ndarray
    n: int


@dataclass(frozen=True)
class CorrelationCell:
    group_key: dict[str, str]
    metric_id: str
    target: str
    rho: float
    n: int


def rank_average_ties(x) -> RankVector:
    """1-based ranks in ascending value order; ties get the mean of their span."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 1 or a.size < 1:
        raise ValueError("expected a non-empty 1-D sequence")
    if not np.all(np.isfinite(a)):
        raise NonFinite("rank input contains non-finite values")
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[order[j + 1]] == a[order[i]]:
            j += 1
        # positions i..j (0-based) share the average of ranks i+1..j+1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return RankVector(ranks=ranks, n=int(a.size))


def spearman(x, y) -> float:
    """Pearson correlation of the tie-averaged rank vectors of x and y."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"length mismatch: {x.size} vs {y.size}")
    if x.size < MIN_GROUP_SIZE:
        raise ValueError(f"need at least {MIN_GROUP_SIZE} observations, got {x.size}")
    rx = rank_average_ties(x).ranks
    ry = rank_average_ties(y).ranks
    dx = rx - np.mean(rx)
    dy = ry - np.mean(ry)
    vx = float(np.sum(dx * dx))
    vy = float(np.sum(dy * dy))
    if vx == 0.0 or vy == 0.0:
        raise ConstantInput("correlation is undefined for a constant vector")
    # plain math.sqrt keeps the result an exact python float: for identical
    # rank vectors vx == vy and sum(dx*dy) == vx, so rho is exactly 1.0
    return float(np.sum(dx * dy)) / math.sqrt(vx * vy)


def record_group_value(record: RunRecord, key: str) -> str:
    """Group-key lookup: record fields first, then hyperparameters."""
    if key in ("epoch", "optimizer", "dataset", "model_id"):
        return str(getattr(record, key))
    if key in record.hyperparams:
        return record.hyperparams[key]
    raise KeyError(f"record {record.model_id!r} epoch {record.epoch} has no group key {key!r}")


def _sort_component(value: str):
    # numeric-aware ordering so epoch "10" sorts after epoch "2"
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def grouped_correlations(
    entries: list[tuple[RunRecord, ModelMetrics]],
    group_by: list[str],
    metrics: list[str],
    targets: list[str] = list(TARGETS),
) -> list[CorrelationCell]:
    """Spearman correlation per (group, metric, target).

    Groups with fewer than MIN_GROUP_SIZE records, or with a constant
    metric or target column, are skipped with a warning rather than
    emitted. The generalization gap is train minus test accuracy.
    """
    for t in targets:
        if t not in TARGETS:
            raise ValueError(f"unknown target {t!r}")
    groups: dict[tuple[str, ...], list[tuple[RunRecord, ModelMetrics]]] = {}
    for record, mm in entries:
        key = tuple(record_group_value(record, k) for k in group_by)
        groups.setdefault(key, []).append((record, mm))

    cells = []
    for key, members in groups.items():
        if len(members) < MIN_GROUP_SIZE:
            log.warning("skipping group %s: only %d records", dict(zip(group_by, key)), len(members))
            continue
        target_values = {
            "test_accuracy": np.array([r.test_accuracy for r, _ in members]),
            "generalization_gap": np.array(
                [r.train_accuracy - r.test_accuracy for r, _ in members]
            ),
        }
        for base_id in metrics:
            values = np.array([mm.value(base_id) for _, mm in members])
            metric_id = ("lrf." if members[0][1].lrf_applied else "") + base_id
            for target in targets:
                try:
                    rho = spearman(values, target_values[target])
                except ConstantInput:
                    log.warning(
                        "skipping group=%s metric=%s target=%s: constant column",
                        dict(zip(group_by, key)), metric_id, target,
                    )
                    continue
                cells.append(
                    CorrelationCell(
                        group_key=dict(zip(group_by, key)),
                        metric_id=metric_id,
                        target=target,
                        rho=rho,
                        n=len(members),
                    )
                )
    cells.sort(
        key=lambda c: (
            tuple(_sort_component(v) for v in c.group_key.values()),
            c.metric_id,
            c.target,
        )
    )
    return cells
