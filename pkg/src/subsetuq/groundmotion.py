"""Synthetic ground motions and the 31-entry intensity-measure vector."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.integrate import cumulative_trapezoid, trapezoid

from .data import FeatureAxis, FeatureTable
from .structsim import sdof_peak_displacements

G = 9.80665
SPECTRAL_DAMPING = 0.05
ASI_BAND = (0.1, 0.5)
VSI_BAND = (0.1, 2.5)
EPV_BAND = (0.8, 2.0)
BAND_STEP = 0.02


@dataclass(frozen=True, eq=False)
class GroundMotionRecord:
    id: str
    dt: float
    accel: np.ndarray

    def __post_init__(self):
        acc = np.array(self.accel, dtype=float)
        acc.setflags(write=False)
        if acc.ndim != 1 or acc.size < 2:
            raise ValueError("a record needs at least two samples")
        if not np.all(np.isfinite(acc)):
            raise ValueError("record samples must be finite")
        if not 0.0 < self.dt <= 0.02:
            raise ValueError(f"dt must lie in (0, 0.02] s, got {self.dt}")
        object.__setattr__(self, "accel", acc)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def duration(self) -> float:
        return self.dt * (self.accel.size - 1)

    @property
    def time(self) -> np.ndarray:
        return self.dt * np.arange(self.accel.size)

    def scaled(self, factor: float) -> "GroundMotionRecord":
        return GroundMotionRecord(self.id, self.dt, self.accel * factor)

    def __eq__(self, other):
        if not isinstance(other, GroundMotionRecord):
            return NotImplemented
        return self.id == other.id and self.dt == other.dt and np.array_equal(self.accel, other.accel)


@dataclass(frozen=True)
class GmSynthParams:
    duration: float = 20.0
    peak_fraction: float = 0.25
    shape_exponent: float = 2.0
    filter_freq: float = 2.0  # Hz
    filter_damping: float = 0.6
    target_pga: float = 2.0  # m/s^2
    seed: int = 0
    dt: float = 0.01

    def __post_init__(self):
        if not (self.duration > 0 and self.shape_exponent > 0 and self.filter_freq > 0 and self.dt > 0):
            raise ValueError("duration, shape exponent, filter frequency and dt must be positive")
        if not 0.0 < self.peak_fraction < 1.0:
            raise ValueError("peak fraction must lie in (0, 1)")
        if not 0.0 < self.filter_damping < 1.0:
            raise ValueError("filter damping must lie in (0, 1)")
        if self.target_pga < 0:
            raise ValueError("target PGA must be non-negative")


def envelope(t: np.ndarray, t_peak: float, c: float) -> np.ndarray:
    """(t/tp)^c * exp(c(1 - t/tp)): zero at t=0, unit peak at tp, exponential tail."""
    s = t / t_peak
    return s**c * np.exp(c * (1.0 - s))


def synth_record(params: GmSynthParams, record_id: str = "gm") -> GroundMotionRecord:
    """Enveloped, band-pass filtered white noise scaled to the target PGA."""
    n = int(round(params.duration / params.dt)) + 1
    t = params.dt * np.arange(n)
    if params.target_pga == 0.0:
        return GroundMotionRecord(record_id, params.dt, np.zeros(n))
    noise = np.random.default_rng(params.seed).standard_normal(n)
    w = 2.0 * np.pi * params.filter_freq
    z = params.filter_damping
    # H(s) = 2 z w s / (s^2 + 2 z w s + w^2), discretized with the bilinear transform
    b, a = signal.bilinear([2.0 * z * w, 0.0], [1.0, 2.0 * z * w, w * w], fs=1.0 / params.dt)
    shaped = signal.lfilter(b, a, noise) * envelope(t, params.peak_fraction * params.duration, params.shape_exponent)
    peak = np.max(np.abs(shaped))
    return GroundMotionRecord(record_id, params.dt, shaped * (params.target_pga / peak))


def load_record(path, record_id: str | None = None) -> GroundMotionRecord:
    """Two-column CSV (time s, accel m/s^2); an optional non-numeric header row is skipped."""
    path = Path(path)
    times, acc = [], []
    with path.open(newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: line {i + 1} has {len(row)} columns, expected 2")
            try:
                times.append(float(row[0]))
                acc.append(float(row[1]))
            except ValueError:
                if i == 0:
                    continue
                raise ValueError(f"{path}: non-numeric value on line {i + 1}") from None
    if len(times) < 2:
        raise ValueError(f"{path}: fewer than two samples")
    steps = np.diff(times)
    dt = (times[-1] - times[0]) / (len(times) - 1)
    if np.max(np.abs(steps - dt)) > 1e-9:
        raise ValueError(f"{path}: time step is not uniform to 1e-9 s")
    return GroundMotionRecord(record_id or path.stem, dt, np.array(acc))


def save_record(record: GroundMotionRecord, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "accel"])
        for t, a in zip(record.time, record.accel):
            w.writerow([repr(float(t)), repr(float(a))])


def integrate_record(record: GroundMotionRecord) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and displacement by cumulative trapezoid after removing the mean acceleration."""
    acc = record.accel - record.accel.mean()
    vel = cumulative_trapezoid(acc, dx=record.dt, initial=0.0)
    disp = cumulative_trapezoid(vel, dx=record.dt, initial=0.0)
    return vel, disp


def response_spectrum(record: GroundMotionRecord, periods, damping: float = SPECTRAL_DAMPING):
    """Pseudo-acceleration, pseudo-velocity and displacement spectra at ``periods``."""
    periods = np.atleast_1d(np.asarray(periods, dtype=float))
    if np.any(periods <= 0):
        raise ValueError("periods must be positive")
    if np.any(periods < 4.0 * record.dt):
        raise ValueError(f"periods shorter than 4*dt = {4 * record.dt} s are not resolved")
    if not 0.0 <= damping <= 0.5:
        raise ValueError("damping must lie in [0, 0.5]")
    sd = sdof_peak_displacements(periods, damping, record.accel, record.dt)
    w = 2.0 * np.pi / periods
    return w * w * sd, w * sd, sd


IM_NAMES: tuple[str, ...] = (
    ("PGA", "PGV", "PGD", "RMS_accel", "RMS_vel", "RMS_disp", "Arias", "D5_95", "CAV", "CAD")
    + tuple(f"PSa_T{i}" for i in range(1, 6))
    + tuple(f"PSv_T{i}" for i in range(1, 6))
    + tuple(f"Sd_T{i}" for i in range(1, 6))
    + ("ASI", "VSI", "DSI", "EPA", "EPV", "mean_period_zc")
)
assert len(IM_NAMES) == 31


def arias_intensity(record: GroundMotionRecord) -> float:
    return math.pi / (2.0 * G) * float(trapezoid(record.accel**2, dx=record.dt))


def significant_duration(record: GroundMotionRecord, lo: float = 0.05, hi: float = 0.95) -> float:
    """Time between lo and hi fractions of the Arias build-up (linear interpolation)."""
    build = cumulative_trapezoid(record.accel**2, dx=record.dt, initial=0.0)
    total = build[-1]
    if total == 0.0:
        return 0.0
    frac = build / total
    t = record.time
    return float(np.interp(hi, frac, t) - np.interp(lo, frac, t))


def zero_crossing_period(record: GroundMotionRecord) -> float:
    """Twice the mean spacing between successive sign changes of the acceleration."""
    a = record.accel
    s = np.sign(a)
    idx = np.flatnonzero((s[:-1] * s[1:]) < 0)
    if idx.size < 2:
        return 0.0
    # interpolate crossing instants
    t0 = record.time[idx]
    tc = t0 + record.dt * a[idx] / (a[idx] - a[idx + 1])
    return float(2.0 * np.mean(np.diff(tc)))


def _band_grid(band) -> np.ndarray:
    lo, hi = band
    n = int(round((hi - lo) / BAND_STEP)) + 1
    return np.linspace(lo, hi, n)


def extract_ims(record: GroundMotionRecord, modal_periods) -> np.ndarray:
    """The 31 intensity measures in :data:`IM_NAMES` order."""
    modal_periods = np.asarray(modal_periods, dtype=float)
    if modal_periods.shape != (5,) or np.any(modal_periods <= 0):
        raise ValueError("need exactly five positive modal periods")
    acc = record.accel
    dt = record.dt
    vel, disp = integrate_record(record)
    dur = record.duration
    rms = lambda x: math.sqrt(float(trapezoid(x * x, dx=dt)) / dur)  # noqa: E731

    psa, psv, sd = response_spectrum(record, modal_periods)
    grid_a = _band_grid(ASI_BAND)
    grid_v = _band_grid(VSI_BAND)
    grid_e = _band_grid(EPV_BAND)
    psa_a, _, _ = response_spectrum(record, grid_a)
    _, psv_v, sd_v = response_spectrum(record, grid_v)
    _, psv_e, _ = response_spectrum(record, grid_e)
    asi = float(trapezoid(psa_a, grid_a))
    vsi = float(trapezoid(psv_v, grid_v))
    dsi = float(trapezoid(sd_v, grid_v))
    epa = asi / (ASI_BAND[1] - ASI_BAND[0]) / 2.5
    epv = float(trapezoid(psv_e, grid_e)) / (EPV_BAND[1] - EPV_BAND[0]) / 2.5

    return np.array(
        [
            np.max(np.abs(acc)),
            np.max(np.abs(vel)),
            np.max(np.abs(disp)),
            rms(acc),
            rms(vel),
            rms(disp),
            arias_intensity(record),
            significant_duration(record),
            float(trapezoid(np.abs(acc), dx=dt)),
            float(trapezoid(np.abs(vel), dx=dt)),
            *psa,
            *psv,
            *sd,
            asi,
            vsi,
            dsi,
            epa,
            epv,
            zero_crossing_period(record),
        ]
    )


def im_table(records, modal_periods) -> FeatureTable:
    values = np.vstack([extract_ims(r, modal_periods) for r in records])
    return FeatureTable(values, FeatureAxis.GroundMotion, IM_NAMES, tuple(r.id for r in records))
