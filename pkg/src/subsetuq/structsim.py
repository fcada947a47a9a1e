"""Nonlinear shear-building simulator producing the EDP matrices.

Each story is a bilinear kinematic-hardening spring; floors carry lumped mass.
Time integration is Newmark average acceleration with full Newton iteration.
Rayleigh damping: the mass-proportional coefficient is fixed, the
stiffness-proportional part multiplies the tangent stiffness committed at the
start of each step (``damping="tangent"``) or the initial stiffness
(``damping="initial"``).

Material parameters (18 for the default six-story model)::

    0  mass_scale          all floor masses
    1  stiffness_scale     all story stiffnesses
    2  strength_scale      all story yield forces
    3  post_yield_ratio    hardening stiffness / elastic stiffness
    4  damping_ratio       Rayleigh target on nominal modes 1 and 2
    5..5+n-1               per-story stiffness multipliers (story 1 first)
    5+n..5+2n-1            per-story strength multipliers
    5+2n                   roof mass multiplier
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numba
import numpy as np
from scipy import linalg

from .data import EdpKind, EdpMatrix, FeatureAxis, FeatureTable
from .lowdisc import SamplerConfig, Scheme, gaussian_transform, lhs_sample

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 30
COLLAPSE_FACTOR = 1e3

_OK, _NO_CONVERGENCE, _COLLAPSE = 0, 1, 2


class SimulationError(RuntimeError):
    def __init__(self, message, step=None, cell=None):
        super().__init__(message)
        self.step = step
        self.cell = cell


class NewtonDivergence(SimulationError):
    pass


@dataclass(frozen=True)
class StructureModel:
    """Nominal shear building; index 0 is the first (ground) story."""

    masses: tuple[float, ...]
    stiffnesses: tuple[float, ...]
    yield_drifts: tuple[float, ...]
    story_height: float = 3.0

    def __post_init__(self):
        n = len(self.masses)
        if n < 2:
            raise ValueError("need at least two stories")
        if len(self.stiffnesses) != n or len(self.yield_drifts) != n:
            raise ValueError("masses, stiffnesses and yield drifts must have one entry per story")
        for name in ("masses", "stiffnesses", "yield_drifts"):
            vals = getattr(self, name)
            if any(not v > 0 for v in vals):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, tuple(float(v) for v in vals))
        if not self.story_height > 0:
            raise ValueError("story height must be positive")

    @property
    def n_stories(self) -> int:
        return len(self.masses)

    @property
    def total_height(self) -> float:
        return self.story_height * self.n_stories

    @classmethod
    def default(cls) -> "StructureModel":
        """Six stories, stiffness tapering with height, T1 about 0.7 s."""
        taper = (1.0, 0.95, 0.9, 0.8, 0.7, 0.6)
        return cls(
            masses=(2.0e5,) * 6,
            stiffnesses=tuple(3.2e8 * t for t in taper),
            yield_drifts=(0.012,) * 6,
            story_height=3.0,
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def from_json(cls, path) -> "StructureModel":
        return cls(**json.loads(Path(path).read_text()))


def material_names(n_stories: int) -> tuple[str, ...]:
    return (
        ("mass_scale", "stiffness_scale", "strength_scale", "post_yield_ratio", "damping_ratio")
        + tuple(f"stiffness_mult_{i + 1}" for i in range(n_stories))
        + tuple(f"strength_mult_{i + 1}" for i in range(n_stories))
        + ("roof_mass_mult",)
    )


@dataclass(frozen=True)
class MaterialSample:
    mass_scale: float = 1.0
    stiffness_scale: float = 1.0
    strength_scale: float = 1.0
    post_yield_ratio: float = 0.03
    damping_ratio: float = 0.05
    stiffness_mult: tuple[float, ...] = (1.0,) * 6
    strength_mult: tuple[float, ...] = (1.0,) * 6
    roof_mass_mult: float = 1.0

    def __post_init__(self):
        if len(self.stiffness_mult) != len(self.strength_mult):
            raise ValueError("per-story multiplier lists differ in length")
        scales = (self.mass_scale, self.stiffness_scale, self.strength_scale, self.roof_mass_mult)
        if any(not s > 0 for s in scales + tuple(self.stiffness_mult) + tuple(self.strength_mult)):
            raise ValueError("scale factors must be positive")
        if not 0.0 <= self.post_yield_ratio < 1.0:
            raise ValueError("post-yield ratio must lie in [0, 1)")
        if not 0.0 < self.damping_ratio < 0.2:
            raise ValueError("damping ratio must lie in (0, 0.2)")

    @classmethod
    def nominal(cls, n_stories: int = 6) -> "MaterialSample":
        return cls(stiffness_mult=(1.0,) * n_stories, strength_mult=(1.0,) * n_stories)

    @property
    def n_stories(self) -> int:
        return len(self.stiffness_mult)

    def to_vector(self) -> np.ndarray:
        return np.array(
            [self.mass_scale, self.stiffness_scale, self.strength_scale, self.post_yield_ratio, self.damping_ratio,
             *self.stiffness_mult, *self.strength_mult, self.roof_mass_mult]
        )

    @classmethod
    def from_vector(cls, vec) -> "MaterialSample":
        vec = [float(v) for v in vec]
        n = (len(vec) - 6) // 2
        if len(vec) != 2 * n + 6 or n < 1:
            raise ValueError(f"material vector of length {len(vec)} does not match 2*n_stories + 6")
        return cls(*vec[:5], tuple(vec[5:5 + n]), tuple(vec[5 + n:5 + 2 * n]), vec[5 + 2 * n])

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def from_json(cls, path) -> "MaterialSample":
        d = json.loads(Path(path).read_text())
        d["stiffness_mult"] = tuple(d["stiffness_mult"])
        d["strength_mult"] = tuple(d["strength_mult"])
        return cls(**d)


def default_cov(n_stories: int = 6) -> np.ndarray:
    """Coefficients of variation for the parameter vector."""
    return np.array([0.1, 0.15, 0.15, 0.25, 0.2] + [0.1] * (2 * n_stories) + [0.1])


def sample_materials(nominal: MaterialSample, cov, count: int, seed: int) -> FeatureTable:
    """LHS -> Gaussian(nominal, cov*nominal) per parameter, floored at 5% of nominal."""
    if count < 1:
        raise ValueError("count must be >= 1")
    mean = nominal.to_vector()
    cov = np.broadcast_to(np.asarray(cov, dtype=float), mean.shape)
    if np.any(cov < 0):
        raise ValueError("coefficients of variation must be non-negative")
    u = lhs_sample(SamplerConfig(Scheme.LatinHypercube, count, mean.size, seed))
    # LHS points are in [0,1); a zero would break the inverse CDF
    u = np.clip(u, np.finfo(float).tiny, None)
    x = gaussian_transform(u, mean, cov * np.abs(mean))
    floor = 0.05 * mean
    x = np.where(x < floor, floor, x)
    return FeatureTable(x, FeatureAxis.Material, material_names(nominal.n_stories))


def materials_from_table(table: FeatureTable) -> list[MaterialSample]:
    """Rows of a material table as samples; post-yield ratio and damping are clipped into their valid ranges."""
    out = []
    for row in table.values:
        row = row.copy()
        row[3] = min(row[3], 0.5)
        row[4] = min(max(row[4], 0.005), 0.15)
        out.append(MaterialSample.from_vector(row))
    return out


# ------------------------------------------------------------ story properties


def story_properties(model: StructureModel, material: MaterialSample):
    """Floor masses, elastic story stiffnesses and yield forces for one material sample."""
    if material.n_stories != model.n_stories:
        raise ValueError(f"material has {material.n_stories} stories, model has {model.n_stories}")
    m = np.array(model.masses) * material.mass_scale
    m[-1] *= material.roof_mass_mult
    k_nom = np.array(model.stiffnesses)
    k = k_nom * material.stiffness_scale * np.array(material.stiffness_mult)
    fy = k_nom * np.array(model.yield_drifts) * material.strength_scale * np.array(material.strength_mult)
    return m, k, fy


def shear_stiffness_matrix(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    n = k.size
    K = np.zeros((n, n))
    for i in range(n):
        K[i, i] += k[i]
        if i + 1 < n:
            K[i, i] += k[i + 1]
            K[i, i + 1] = K[i + 1, i] = -k[i + 1]
    return K


def natural_frequencies(masses, stiffnesses) -> np.ndarray:
    """Undamped circular frequencies, ascending."""
    K = shear_stiffness_matrix(stiffnesses)
    M = np.diag(np.asarray(masses, dtype=float))
    try:
        w2 = linalg.eigh(K, M, eigvals_only=True)
    except linalg.LinAlgError as exc:
        raise SimulationError(f"eigen-solution failed: {exc}") from exc
    if np.any(w2 <= 0):
        raise SimulationError("stiffness matrix is not positive definite")
    return np.sqrt(w2)


def modal_periods(model: StructureModel, material: MaterialSample | None = None, count: int = 5) -> np.ndarray:
    """First ``count`` undamped periods of the initial-stiffness model, longest first."""
    if model.n_stories < count:
        raise ValueError(f"{count} periods requested from a {model.n_stories}-story model")
    material = material or MaterialSample.nominal(model.n_stories)
    m, k, _ = story_properties(model, material)
    w = natural_frequencies(m, k)
    return 2.0 * np.pi / w[:count]


def rayleigh_coefficients(w1: float, w2: float, zeta: float) -> tuple[float, float]:
    a0 = 2.0 * zeta * w1 * w2 / (w1 + w2)
    a1 = 2.0 * zeta / (w1 + w2)
    return a0, a1


# ------------------------------------------------------------ numba kernels


@numba.njit(cache=True)
def _story_state(drift, drift_c, force_c, k, fy, alpha):
    """Bilinear kinematic hardening: trial force from committed state, clipped to the yield band."""
    n = drift.size
    f = np.empty(n)
    kt = np.empty(n)
    for i in range(n):
        trial = force_c[i] + k[i] * (drift[i] - drift_c[i])
        hard = alpha * k[i] * drift[i]
        band = (1.0 - alpha) * fy[i]
        upper = hard + band
        lower = hard - band
        if trial > upper:
            f[i] = upper
            kt[i] = alpha * k[i]
        elif trial < lower:
            f[i] = lower
            kt[i] = alpha * k[i]
        else:
            f[i] = trial
            kt[i] = k[i]
    return f, kt


@numba.njit(cache=True)
def _drifts(u):
    n = u.size
    d = np.empty(n)
    d[0] = u[0]
    for i in range(1, n):
        d[i] = u[i] - u[i - 1]
    return d


@numba.njit(cache=True)
def _shear_matvec(ks, x):
    """(shear-building matrix of story values ks) @ x."""
    n = x.size
    d = _drifts(x)
    out = np.empty(n)
    for i in range(n):
        out[i] = ks[i] * d[i]
        if i + 1 < n:
            out[i] -= ks[i + 1] * d[i + 1]
    return out


@numba.njit(cache=True)
def _nodal_from_story(fs):
    n = fs.size
    out = np.empty(n)
    for i in range(n):
        out[i] = fs[i]
        if i + 1 < n:
            out[i] -= fs[i + 1]
    return out


@numba.njit(cache=True)
def _solve_tridiag(diag_extra, ks, rhs):
    """Solve (diag(diag_extra) + shear matrix of ks) x = rhs by the Thomas algorithm."""
    n = rhs.size
    b = np.empty(n)
    c = np.empty(n)
    for i in range(n):
        b[i] = diag_extra[i] + ks[i]
        if i + 1 < n:
            b[i] += ks[i + 1]
            c[i] = -ks[i + 1]
        else:
            c[i] = 0.0
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = c[0] / b[0]
    dp[0] = rhs[0] / b[0]
    for i in range(1, n):
        # sub-diagonal entry (i, i-1) equals c[i-1] by symmetry
        den = b[i] - c[i - 1] * cp[i - 1]
        cp[i] = c[i] / den
        dp[i] = (rhs[i] - c[i - 1] * dp[i - 1]) / den
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


@numba.njit(cache=True)
def _integrate(m, k, fy, alpha, a0, a1, ag, dt, u0, v0, tangent_damping, tol, max_iter, cap, keep):
    n = m.size
    nt = ag.size
    u = u0.copy()
    v = v0.copy()
    drift_c = _drifts(u)
    force_c = k * drift_c  # initial state assumed elastic
    kt_c = k.copy()
    # damping story coefficients for the current step
    cs = a1 * (kt_c if tangent_damping else k)
    fd = a0 * m * v + _shear_matvec(cs, v)
    fs_nodal = _nodal_from_story(force_c)
    acc = (-m * ag[0] - fd - fs_nodal) / m

    n_keep = nt if keep else 1
    hu = np.zeros((n_keep, n))
    hv = np.zeros((n_keep, n))
    ha = np.zeros((n_keep, n))
    hfs = np.zeros((n_keep, n))
    hfd = np.zeros((n_keep, n))
    if keep:
        hu[0] = u
        hv[0] = v
        ha[0] = acc
        hfs[0] = force_c
        hfd[0] = fd

    max_top = abs(u[n - 1])
    max_base = abs(force_c[0] + cs[0] * v[0])
    c_m = 4.0 / (dt * dt)
    c_v = 2.0 / dt
    for step in range(1, nt):
        cs = a1 * (kt_c if tangent_damping else k)
        p = -m * ag[step]
        # effective load collects all terms independent of the new displacement
        va = c_m * u + (4.0 / dt) * v + acc
        vv = c_v * u + v
        p_eff = p + m * va + a0 * m * vv + _shear_matvec(cs, vv)
        ref = np.sqrt(np.sum(p_eff * p_eff))
        un = u.copy()
        converged = False
        fs = force_c.copy()
        kt = kt_c.copy()
        for it in range(max_iter + 1):
            fs, kt = _story_state(_drifts(un), drift_c, force_c, k, fy, alpha)
            inertia_damp = (c_m * m + c_v * a0 * m) * un + _shear_matvec(c_v * cs, un)
            r = p_eff - inertia_damp - _nodal_from_story(fs)
            rn = np.sqrt(np.sum(r * r))
            if rn <= tol * ref or rn == 0.0:
                converged = True
                break
            if it == max_iter:
                break
            du = _solve_tridiag(c_m * m + c_v * a0 * m, kt + c_v * cs, r)
            un = un + du
        if not converged:
            return _NO_CONVERGENCE, step, max_top, max_base, hu, hv, ha, hfs, hfd
        an = c_m * (un - u) - (4.0 / dt) * v - acc
        vn = c_v * (un - u) - v
        u = un
        v = vn
        acc = an
        drift_c = _drifts(u)
        force_c = fs
        kt_c = kt
        top = abs(u[n - 1])
        base = abs(force_c[0] + cs[0] * v[0])
        if top > max_top:
            max_top = top
        if base > max_base:
            max_base = base
        if keep:
            hu[step] = u
            hv[step] = v
            ha[step] = acc
            hfs[step] = force_c
            hfd[step] = a0 * m * v + _shear_matvec(cs, v)
        if max_top > cap:
            return _COLLAPSE, step, cap, max_base, hu, hv, ha, hfs, hfd
    return _OK, nt, max_top, max_base, hu, hv, ha, hfs, hfd


@numba.njit(cache=True)
def _sdof_linear(omegas, zeta, ag, dt):
    """Peak |relative displacement| of linear oscillators under base acceleration ag."""
    out = np.zeros(omegas.size)
    c_m = 4.0 / (dt * dt)
    for j in range(omegas.size):
        w = omegas[j]
        c = 2.0 * zeta * w
        kk = w * w
        keff = kk + c_m + 2.0 / dt * c
        u = 0.0
        v = 0.0
        a = -ag[0]
        peak = 0.0
        for i in range(1, ag.size):
            rhs = -ag[i] + (c_m * u + 4.0 / dt * v + a) + c * (2.0 / dt * u + v)
            un = rhs / keff
            vn = 2.0 / dt * (un - u) - v
            a = c_m * (un - u) - 4.0 / dt * v - a
            u = un
            v = vn
            if abs(u) > peak:
                peak = abs(u)
        out[j] = peak
    return out


def sdof_peak_displacements(periods, damping: float, accel, dt: float) -> np.ndarray:
    """Newmark average-acceleration peak relative displacement per period (unit mass)."""
    omegas = 2.0 * np.pi / np.asarray(periods, dtype=float)
    return _sdof_linear(omegas, float(damping), np.ascontiguousarray(accel, dtype=float), float(dt))


# ------------------------------------------------------------ public simulation API


@dataclass(frozen=True)
class EdpPair:
    max_top_disp: float
    max_base_shear: float
    collapsed: bool = False


@dataclass
class History:
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    story_force: np.ndarray
    damping_force: np.ndarray
    edp: EdpPair = field(default=None)


def simulate(masses, stiffnesses, yield_forces, post_yield_ratio, a0, a1, accel, dt, *,
             u0=None, v0=None, damping="tangent", total_height=None, keep_history=False):
    """Integrate a shear building from explicit story properties.

    Works for any story count, including a single story. ``yield_forces`` may
    contain ``inf`` for an elastic story. Returns an :class:`EdpPair`, or a
    :class:`History` when ``keep_history`` is set.
    """
    m = np.ascontiguousarray(masses, dtype=float)
    k = np.ascontiguousarray(stiffnesses, dtype=float)
    fy = np.ascontiguousarray(yield_forces, dtype=float)
    n = m.size
    ag = np.ascontiguousarray(accel, dtype=float)
    if ag.size < 2:
        raise ValueError("record needs at least two samples")
    if damping not in ("tangent", "initial"):
        raise ValueError("damping must be 'tangent' or 'initial'")
    u0 = np.zeros(n) if u0 is None else np.ascontiguousarray(u0, dtype=float)
    v0 = np.zeros(n) if v0 is None else np.ascontiguousarray(v0, dtype=float)
    height = total_height if total_height is not None else 3.0 * n
    cap = COLLAPSE_FACTOR * height
    status, step, top, base, hu, hv, ha, hfs, hfd = _integrate(
        m, k, fy, float(post_yield_ratio), float(a0), float(a1), ag, float(dt), u0, v0,
        damping == "tangent", NEWTON_TOL, NEWTON_MAX_ITER, cap, keep_history,
    )
    if status == _NO_CONVERGENCE:
        raise NewtonDivergence(f"Newton iteration did not converge at step {step}", step=step)
    edp = EdpPair(float(top), float(base), status == _COLLAPSE)
    if keep_history:
        return History(hu, hv, ha, hfs, hfd, edp)
    return edp


def check_time_step(model: StructureModel, dt: float) -> None:
    t1 = modal_periods(model, count=1)[0]
    if dt > t1 / 50.0:
        raise ValueError(f"dt = {dt} s exceeds T1/50 = {t1 / 50:.4g} s for the nominal model")


def newmark_nonlinear(model: StructureModel, material: MaterialSample, record, *, damping="tangent",
                      keep_history=False):
    """Peak roof displacement and peak base shear of one (material, record) simulation."""
    check_time_step(model, record.dt)
    m, k, fy = story_properties(model, material)
    m_nom, k_nom, _ = story_properties(model, MaterialSample.nominal(model.n_stories))
    w = natural_frequencies(m_nom, k_nom)
    a0, a1 = rayleigh_coefficients(w[0], w[1], material.damping_ratio)
    return simulate(m, k, fy, material.post_yield_ratio, a0, a1, record.accel, record.dt,
                    damping=damping, total_height=model.total_height, keep_history=keep_history)


@dataclass(frozen=True)
class EdpResult:
    top_displacement: EdpMatrix
    base_shear: EdpMatrix
    collapsed: np.ndarray


def build_edp_matrices(records, materials, model: StructureModel, *, damping="tangent") -> EdpResult:
    """Full cross product of records and material samples (extended cloud)."""
    if isinstance(materials, FeatureTable):
        col_ids = materials.row_ids
        materials = materials_from_table(materials)
    else:
        col_ids = None
    n, m = len(records), len(materials)
    disp = np.zeros((n, m))
    shear = np.zeros((n, m))
    flags = np.zeros((n, m), dtype=bool)
    for i, rec in enumerate(records):
        for j, mat in enumerate(materials):
            try:
                edp = newmark_nonlinear(model, mat, rec, damping=damping)
            except SimulationError as exc:
                raise type(exc)(f"cell ({i}, {j}): {exc}", step=exc.step, cell=(i, j)) from exc
            except ValueError as exc:
                raise ValueError(f"cell ({i}, {j}) record {rec.id!r}: {exc}") from exc
            disp[i, j] = edp.max_top_disp
            shear[i, j] = edp.max_base_shear
            flags[i, j] = edp.collapsed
    row_ids = tuple(r.id for r in records)
    return EdpResult(
        EdpMatrix(EdpKind.TopDisplacement, disp, row_ids, col_ids),
        EdpMatrix(EdpKind.BaseShear, shear, row_ids, col_ids),
        flags,
    )
