"""Observation masks: which (record, material) simulations get run.

Every column draws from its own generator seeded by ``SeedSequence([seed, column])``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .cluster import ClusterAssignment
from .data import ObservationMask, column_budget


class SamplingMode(str, enum.Enum):
    Uniform = "Uniform"
    ClusterStratified = "ClusterStratified"


def column_rng(seed: int, column: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(column)]))


def _check_budget(n_rows: int, cr: float) -> int:
    if not 0.0 < cr <= 1.0:
        raise ValueError(f"cr must lie in (0, 1], got {cr}")
    b = column_budget(n_rows, cr)
    if not 1 <= b <= n_rows:
        raise ValueError(f"budget round({n_rows}*{cr}) = {b} is outside [1, {n_rows}]")
    return b


def uniform_mask(n_rows: int, n_cols: int, cr: float, seed: int) -> ObservationMask:
    b = _check_budget(n_rows, cr)
    flags = np.zeros((n_rows, n_cols), dtype=bool)
    for j in range(n_cols):
        flags[column_rng(seed, j).choice(n_rows, size=b, replace=False), j] = True
    return ObservationMask(flags, cr)


def _largest_remainder(ideal: np.ndarray, total: int, room: np.ndarray) -> np.ndarray:
    """Floor ``ideal`` then hand out the rest by descending fractional part (lowest index on ties)."""
    q = np.minimum(np.floor(ideal).astype(int), room)
    frac = ideal - np.floor(ideal)
    order = sorted(range(ideal.size), key=lambda c: (-frac[c], c))
    left = total - int(q.sum())
    while left > 0:
        progressed = False
        for c in order:
            if left == 0:
                break
            if q[c] < room[c]:
                q[c] += 1
                left -= 1
                progressed = True
        if not progressed:
            raise ValueError("cluster capacity is smaller than the budget")
        # later passes rank by unmet demand
        order = sorted(range(ideal.size), key=lambda c: (-(ideal[c] - q[c]), c))
    return q


def cluster_quotas(sizes, budget: int) -> np.ndarray:
    """Per-cluster sample counts for one column.

    Proportional to cluster size with largest-remainder rounding; when the
    budget covers every non-empty cluster each gets at least one; no quota
    exceeds its cluster size.
    """
    sizes = np.asarray(sizes, dtype=int)
    n = int(sizes.sum())
    if not 1 <= budget <= n:
        raise ValueError(f"budget {budget} must lie in [1, {n}]")
    ideal = budget * sizes / n
    q = _largest_remainder(ideal, budget, sizes)
    nonempty = np.flatnonzero(sizes > 0)
    if budget >= nonempty.size:
        starving = sorted((c for c in nonempty if q[c] == 0), key=lambda c: (-ideal[c], c))
        for c in starving:
            donors = [d for d in range(sizes.size) if q[d] > 1]
            donor = min(donors, key=lambda d: (-(q[d] - ideal[d]), d))
            q[donor] -= 1
            q[c] += 1
    return q


def stratified_mask(assignment: ClusterAssignment, n_cols: int, cr: float, seed: int,
                    n_rows: int | None = None) -> ObservationMask:
    """Uniform draws without replacement inside each cluster, quotas from :func:`cluster_quotas`."""
    labels = np.asarray(assignment.labels)
    if n_rows is not None and labels.size != n_rows:
        raise ValueError(f"assignment covers {labels.size} rows, expected {n_rows}")
    n = labels.size
    b = _check_budget(n, cr)
    k = assignment.k
    sizes = np.bincount(labels, minlength=k)
    quotas = cluster_quotas(sizes, b)
    members = [np.flatnonzero(labels == c) for c in range(k)]
    flags = np.zeros((n, n_cols), dtype=bool)
    for j in range(n_cols):
        rng = column_rng(seed, j)
        for c in range(k):
            if quotas[c]:
                flags[rng.choice(members[c], size=quotas[c], replace=False), j] = True
    return ObservationMask(flags, cr)


def cluster_counts(mask: ObservationMask, labels) -> np.ndarray:
    """k x M table of observed cells per cluster and column."""
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    return np.vstack([mask.flags[labels == c].sum(axis=0) for c in range(k)])


@dataclass(frozen=True)
class SamplingStrategy:
    mode: SamplingMode
    cr: float
    seed: int
    assignment: ClusterAssignment | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", SamplingMode(self.mode))
        if self.mode is SamplingMode.ClusterStratified and self.assignment is None:
            raise ValueError("stratified sampling needs a cluster assignment")

    def mask(self, n_rows: int, n_cols: int) -> ObservationMask:
        if self.mode is SamplingMode.Uniform:
            return uniform_mask(n_rows, n_cols, self.cr, self.seed)
        return stratified_mask(self.assignment, n_cols, self.cr, self.seed, n_rows=n_rows)
