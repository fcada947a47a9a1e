"""Input-output regression over observed cells and the two-way ensemble with completion.

Features of cell (i, j) are the z-scored IM row i concatenated with the z-scored
material row j; targets are z-scored with the observed mean and std.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .cluster import zscore
from .data import EdpMatrix, FeatureTable, ObservationMask


class RegressionError(ValueError):
    pass


class ModelKind(str, enum.Enum):
    LinearRidge = "LinearRidge"
    KernelRidgeRbf = "KernelRidgeRbf"


@dataclass(frozen=True)
class RegressionConfig:
    model: ModelKind = ModelKind.KernelRidgeRbf
    lam: float = 1e-2
    bandwidth: float | str = "median"
    seed: int = 0  # closed-form fits draw no randomness; kept for config symmetry

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        if self.lam < 0:
            raise ValueError("ridge parameter must be non-negative")
        if self.bandwidth != "median" and not float(self.bandwidth) > 0:
            raise ValueError("bandwidth must be positive or 'median'")


def cell_features(gm_features, material_features) -> np.ndarray:
    """(N*M) x (d_gm + d_mat) design, row-major over cells (i, j)."""
    g = zscore(gm_features.values if isinstance(gm_features, FeatureTable) else gm_features)
    h = zscore(material_features.values if isinstance(material_features, FeatureTable) else material_features)
    n, m = g.shape[0], h.shape[0]
    return np.hstack([np.repeat(g, m, axis=0), np.tile(h, (n, 1))])


def fit_linear_ridge(x: np.ndarray, y: np.ndarray, lam: float):
    """Ridge with an unpenalized intercept via the (d+1) normal equations."""
    design = np.hstack([np.ones((x.shape[0], 1)), x])
    gram = design.T @ design
    gram[1:, 1:] += lam * np.eye(x.shape[1])
    try:
        coef = linalg.solve(gram, design.T @ y, assume_a="sym")
    except (linalg.LinAlgError, ValueError) as exc:
        raise RegressionError(f"normal equations are singular: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise RegressionError("normal equations are singular")
    return lambda q: coef[0] + q @ coef[1:]


def median_bandwidth(x: np.ndarray) -> float:
    h = float(np.median(pdist(x)))
    if not h > 0:
        raise RegressionError("median pairwise distance is zero (training points coincide)")
    return h


def fit_kernel_ridge(x: np.ndarray, y: np.ndarray, lam: float, bandwidth):
    h = median_bandwidth(x) if bandwidth == "median" else float(bandwidth)
    k = np.exp(-cdist(x, x, "sqeuclidean") / (2.0 * h * h))
    k[np.diag_indices_from(k)] += lam
    try:
        alpha = linalg.solve(k, y, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise RegressionError(f"kernel system is singular: {exc}") from exc
    return lambda q: np.exp(-cdist(q, x, "sqeuclidean") / (2.0 * h * h)) @ alpha


def fit_predict(gm_features, material_features, matrix, mask, config: RegressionConfig = RegressionConfig()):
    """Regression estimate of every cell from the observed ones (N x M)."""
    x = matrix.values if isinstance(matrix, EdpMatrix) else np.asarray(matrix, dtype=float)
    w = mask.flags if isinstance(mask, ObservationMask) else np.asarray(mask, dtype=bool)
    n, m = x.shape
    feats = cell_features(gm_features, material_features)
    if feats.shape[0] != n * m:
        raise ValueError(f"feature tables give {feats.shape[0]} cells, matrix has {n * m}")
    if not np.all(np.isfinite(feats)):
        raise ValueError("features must be finite")
    obs = w.ravel()
    if obs.sum() < 2:
        raise RegressionError("need at least two observed cells")
    y = x.ravel()[obs]
    mu, sd = y.mean(), y.std()
    sd = sd if sd > 0 else 1.0
    z = (y - mu) / sd
    train = feats[obs]
    if config.model is ModelKind.LinearRidge:
        predict = fit_linear_ridge(train, z, config.lam)
    else:
        predict = fit_kernel_ridge(train, z, config.lam, config.bandwidth)
    return (mu + sd * predict(feats)).reshape(n, m)


def ensemble(est1, est2) -> np.ndarray:
    """Cellwise mean of two estimates."""
    a = np.asarray(est1, dtype=float)
    b = np.asarray(est2, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"estimates differ in shape: {a.shape} vs {b.shape}")
    return 0.5 * (a + b)
