"""k-medoids (PAM: greedy BUILD, best-improvement SWAP) over ground-motion features."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .data import FeatureTable


class Distance(str, enum.Enum):
    Euclidean = "Euclidean"
    Manhattan = "Manhattan"


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    medoid_indices: np.ndarray
    labels: np.ndarray
    cost: float
    trace: tuple[float, ...] = field(default=())  # BUILD cost, then cost after each SWAP

    @property
    def k(self) -> int:
        return self.medoid_indices.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def standardize(features: FeatureTable) -> FeatureTable:
    """Per-dimension z-score with population variance; constant dimensions become zeros."""
    x = features.values
    if x.shape[0] < 2:
        raise ValueError("standardization needs at least two rows")
    return FeatureTable(zscore(x), features.axis, features.dim_names, features.row_ids)


def zscore(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    centered = x - mu
    out = np.zeros_like(x)
    ok = sd > 0
    out[:, ok] = centered[:, ok] / sd[ok]
    return out


def pairwise_distances(x, distance: Distance = Distance.Euclidean) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    diff = x[:, None, :] - x[None, :, :]
    if Distance(distance) is Distance.Manhattan:
        return np.abs(diff).sum(axis=-1)
    return np.sqrt((diff * diff).sum(axis=-1))


def _assign(dist: np.ndarray, medoids: np.ndarray):
    d = dist[:, medoids]
    labels = np.argmin(d, axis=1)  # argmin returns the first (lowest-index) medoid on ties
    return labels, d[np.arange(dist.shape[0]), labels]


def pam(dist: np.ndarray, k: int) -> ClusterAssignment:
    """PAM on a precomputed distance matrix. Ties go to the lowest index throughout."""
    n = dist.shape[0]
    if n == 0:
        raise ValueError("empty data")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")

    # BUILD: first medoid minimizes total distance, then greedily add the largest gain
    medoids = [int(np.argmin(dist.sum(axis=0)))]
    nearest = dist[:, medoids[0]].copy()
    while len(medoids) < k:
        gains = np.maximum(nearest[:, None] - dist, 0.0).sum(axis=0)
        gains[medoids] = -np.inf
        c = int(np.argmax(gains))
        medoids.append(c)
        nearest = np.minimum(nearest, dist[:, c])
    medoids = np.array(medoids)
    cost = float(nearest.sum())
    trace = [cost]

    # SWAP: evaluate every (medoid, non-medoid) exchange, take the best strictly improving one
    while True:
        is_med = np.zeros(n, dtype=bool)
        is_med[medoids] = True
        candidates = np.flatnonzero(~is_med)
        if candidates.size == 0:
            break
        # swaps must beat the current cost by more than rounding noise
        best = (cost - 1e-12 * max(cost, 1.0), None, None)
        d_med = dist[:, medoids]
        for pos in range(k):
            others = np.delete(d_med, pos, axis=1)
            base = others.min(axis=1) if others.shape[1] else np.full(n, np.inf)
            # total cost if medoid ``pos`` is replaced by each candidate
            totals = np.minimum(base[:, None], dist[:, candidates]).sum(axis=0)
            j = int(np.argmin(totals))
            if totals[j] < best[0]:
                best = (float(totals[j]), pos, int(candidates[j]))
        if best[1] is None:
            break
        medoids = medoids.copy()
        medoids[best[1]] = best[2]
        _, nd = _assign(dist, medoids)
        cost = float(nd.sum())
        trace.append(cost)

    medoids = np.sort(medoids)
    labels, nd = _assign(dist, medoids)
    # a duplicate of a medoid could claim it first; pin every medoid to its own label
    labels[medoids] = np.arange(k)
    return ClusterAssignment(medoids, labels, float(nd.sum()), tuple(trace))


def kmedoids(features, k: int, distance: Distance = Distance.Euclidean, seed: int = 0) -> ClusterAssignment:
    """Cluster rows of ``features`` (a FeatureTable or an array).

    ``seed`` is accepted for interface symmetry with the other samplers; PAM
    with lowest-index tie-breaking never consults it.
    """
    x = features.values if isinstance(features, FeatureTable) else np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("empty feature table")
    if k > x.shape[0]:
        raise ValueError(f"k = {k} exceeds the number of rows {x.shape[0]}")
    if k < 2:
        raise ValueError("k must be at least 2")
    return pam(pairwise_distances(x, distance), k)


def default_k(n_rows: int) -> int:
    return max(2, int(round(n_rows / 10)))

