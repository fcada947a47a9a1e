"""Low-rank completion of an EDP matrix by regularized alternating least squares.

Minimizes  sum_{(i,j) observed} (X_ij - (A B)_ij)^2 + lam (|A|_F^2 + |B|_F^2)
with exact ridge solves for every row of A, then every column of B.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numba
import numpy as np

from .data import EdpMatrix, Factorization, ObservationMask, masked_relative_error


class SingularSolveError(ValueError):
    """A row or column has no observations and the ridge term is zero."""


@dataclass(frozen=True)
class CompletionConfig:
    rank: int = 3
    reg: float = 1e-2  # lam = reg * mean squared observed entry (after scaling)
    max_sweeps: int = 500
    tol: float = 1e-8
    seed: int = 0
    scaling: str = "rms"  # "rms": divide by observed RMS; "none": complete raw values
    init: str = "svd"  # "svd": spectral start from the rescaled observed matrix; "gaussian": N(0, 1/R)

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.reg < 0:
            raise ValueError("regularization must be non-negative")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_sweeps < 1:
            raise ValueError("need at least one sweep")
        if self.scaling not in ("rms", "none"):
            raise ValueError("scaling must be 'rms' or 'none'")
        if self.init not in ("svd", "gaussian"):
            raise ValueError("init must be 'svd' or 'gaussian'")


@dataclass(frozen=True, eq=False)
class CompletionResult:
    estimate: np.ndarray
    factorization: Factorization
    trace: np.ndarray  # objective after initialization, then after every sweep (scaled units)
    lam: float
    scale: float
    converged: bool

    @property
    def metadata(self) -> dict:
        return {
            "rank": self.factorization.rank,
            "lambda": self.lam,
            "scale": self.scale,
            "sweeps": int(self.trace.size - 1),
            "converged": self.converged,
        }


@numba.njit(cache=True)
def _solve_small(g, rhs):
    """Gaussian elimination with partial pivoting; returns False when singular."""
    r = rhs.size
    for c in range(r):
        p = c
        for i in range(c + 1, r):
            if abs(g[i, c]) > abs(g[p, c]):
                p = i
        if g[p, c] == 0.0:
            return False
        if p != c:
            for j in range(r):
                g[c, j], g[p, j] = g[p, j], g[c, j]
            rhs[c], rhs[p] = rhs[p], rhs[c]
        for i in range(c + 1, r):
            f = g[i, c] / g[c, c]
            for j in range(c, r):
                g[i, j] -= f * g[c, j]
            rhs[i] -= f * rhs[c]
    for c in range(r - 1, -1, -1):
        acc = rhs[c]
        for j in range(c + 1, r):
            acc -= g[c, j] * rhs[j]
        rhs[c] = acc / g[c, c]
    return True


@numba.njit(cache=True)
def _half_sweep(factor, x, w, lam, out):
    """Row-wise ridge solves of the free factor ``out`` (rows x R) given ``factor`` (cols x R)."""
    n, m = x.shape
    r = factor.shape[1]
    g = np.empty((r, r))
    rhs = np.empty(r)
    for i in range(n):
        for a in range(r):
            rhs[a] = 0.0
            for b in range(r):
                g[a, b] = lam if a == b else 0.0
        for j in range(m):
            if w[i, j]:
                xij = x[i, j]
                for a in range(r):
                    fa = factor[j, a]
                    rhs[a] += xij * fa
                    for b in range(r):
                        g[a, b] += fa * factor[j, b]
        if not _solve_small(g, rhs):
            return i
        for a in range(r):
            out[i, a] = rhs[a]
    return -1


@numba.njit(cache=True)
def _objective_nb(x, w, a, b, lam):
    n, m = x.shape
    r = a.shape[1]
    total = 0.0
    for i in range(n):
        for j in range(m):
            if w[i, j]:
                e = x[i, j]
                for q in range(r):
                    e -= a[i, q] * b[q, j]
                total += e * e
    reg = 0.0
    for i in range(n):
        for q in range(r):
            reg += a[i, q] * a[i, q]
    for q in range(r):
        for j in range(m):
            reg += b[q, j] * b[q, j]
    return total + lam * reg


@numba.njit(cache=True)
def _als_loop(x, w, a, bt, lam, max_sweeps, tol, trace):
    """Alternate exact solves until the relative objective decrease drops below ``tol``.

    ``bt`` holds B transposed. Returns (sweeps done, converged, failing index or -1, failing side).
    """
    xt = x.T.copy()
    wt = w.T.copy()
    trace[0] = _objective_nb(x, w, a, bt.T, lam)
    for s in range(max_sweeps):
        bad = _half_sweep(bt, x, w, lam, a)
        if bad >= 0:
            return s, False, bad, 0
        bad = _half_sweep(a, xt, wt, lam, bt)
        if bad >= 0:
            return s, False, bad, 1
        trace[s + 1] = _objective_nb(x, w, a, bt.T, lam)
        prev, cur = trace[s], trace[s + 1]
        if prev == 0.0 or (prev - cur) < tol * prev:
            return s + 1, True, -1, 0
    return max_sweeps, False, -1, 0


def _spectral_init(xs: np.ndarray, w: np.ndarray, r: int):
    """Top-r SVD of the zero-filled observed matrix divided by the observed fraction."""
    u, sv, vt = np.linalg.svd(xs / w.mean(), full_matrices=False)
    root = np.sqrt(sv[:r])
    # fix the sign convention so the start does not depend on LAPACK internals
    signs = np.sign(vt[:r].sum(axis=1))
    signs[signs == 0] = 1.0
    return u[:, :r] * root * signs, (vt[:r] * root[:, None]) * signs[:, None]


def als_complete(matrix, mask, config: CompletionConfig = CompletionConfig()) -> CompletionResult:
    """Complete ``matrix`` (EdpMatrix or array) from the cells flagged in ``mask``."""
    x = matrix.values if isinstance(matrix, EdpMatrix) else np.asarray(matrix, dtype=float)
    w = mask.flags if isinstance(mask, ObservationMask) else np.asarray(mask, dtype=bool)
    if x.shape != w.shape:
        raise ValueError(f"matrix {x.shape} and mask {w.shape} differ in shape")
    n, m = x.shape
    r = config.rank
    if not 1 <= r < min(n, m):
        raise ValueError(f"rank {r} must satisfy 1 <= R < min(N, M) = {min(n, m)}")
    if not w.any():
        raise ValueError("mask observes nothing")

    obs = x[w]
    scale = 1.0
    if config.scaling == "rms":
        rms = float(np.sqrt(np.mean(obs * obs)))
        scale = rms if rms > 0 else 1.0
    xs = np.where(w, x, 0.0) / scale
    msq = float(np.mean((obs / scale) ** 2))
    lam = config.reg * (msq if msq > 0 else 1.0)

    if config.init == "svd":
        a, b = _spectral_init(xs, w, r)
    else:
        rng = np.random.default_rng(config.seed)
        a = rng.normal(0.0, 1.0 / np.sqrt(r), size=(n, r))
        b = rng.normal(0.0, 1.0 / np.sqrt(r), size=(r, m))
    if lam == 0.0:
        for axis, what in ((1, "row"), (0, "column")):
            empty = ~w.any(axis=axis)
            if empty.any():
                raise SingularSolveError(f"{what} {int(np.flatnonzero(empty)[0])} has no observed entries and lambda = 0")
    a = np.ascontiguousarray(a, dtype=float)
    bt = np.ascontiguousarray(b.T, dtype=float)
    trace = np.zeros(config.max_sweeps + 1)
    sweeps, converged, bad, side = _als_loop(xs, np.ascontiguousarray(w), a, bt, lam, config.max_sweeps, config.tol, trace)
    if bad >= 0:
        raise SingularSolveError(f"ridge system for {'row' if side == 0 else 'column'} {bad} is singular")
    b = bt.T.copy()
    trace = trace[: sweeps + 1]
    a_out = a * scale
    return CompletionResult(
        estimate=a_out @ b,
        factorization=Factorization(a_out, b),
        trace=trace,
        lam=lam,
        scale=scale,
        converged=bool(converged),
    )


def holdout_split(mask, fraction: float, seed: int):
    """Hide ``fraction`` of each column's observed cells, always leaving at least one."""
    w = mask.flags if isinstance(mask, ObservationMask) else np.asarray(mask, dtype=bool)
    if not 0.0 < fraction <= 0.5:
        raise ValueError("holdout fraction must lie in (0, 0.5]")
    train = w.copy()
    held = np.zeros_like(w)
    rng = np.random.default_rng(seed)
    for j in range(w.shape[1]):
        rows = np.flatnonzero(w[:, j])
        n_hide = min(int(np.floor(fraction * rows.size + 0.5)), rows.size - 1)
        if n_hide <= 0:
            continue
        hide = rng.choice(rows, size=n_hide, replace=False)
        train[hide, j] = False
        held[hide, j] = True
    if not held.any():
        raise ValueError("holdout is infeasible: no column has enough observed entries")
    return train, held


def select_rank(matrix, mask, grid, holdout_fraction: float = 0.2, seed: int = 0,
                config: CompletionConfig = CompletionConfig()) -> int:
    """Rank from ``grid`` with the lowest error on held-out observed cells; ties go to the smaller rank."""
    grid = sorted(set(int(g) for g in grid))
    if not grid:
        raise ValueError("empty rank grid")
    if len(grid) == 1:
        return grid[0]
    x = matrix.values if isinstance(matrix, EdpMatrix) else np.asarray(matrix, dtype=float)
    train, held = holdout_split(mask, holdout_fraction, seed)
    best_rank, best_err = None, np.inf
    for r in grid:
        cfg = replace(config, rank=r)
        est = als_complete(x, train, cfg).estimate
        err = masked_relative_error(x, est, ~held)
        if err < best_err:
            best_rank, best_err = r, err
    return best_rank
