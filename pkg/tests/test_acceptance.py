"""Acceptance suite: one test (or group) per numbered criterion.

The default experiment runs twice through the CLI (about two minutes each on
one core); every other check is fast.
"""
import itertools
import math
import time

import numpy as np
import pytest

import subsetuq.completion as completion
import subsetuq.harness as harness
from subsetuq.cli import main
from subsetuq.cluster import kmedoids, pairwise_distances
from subsetuq.completion import CompletionConfig, als_complete
from subsetuq.data import column_budget, masked_relative_error
from subsetuq.groundmotion import G, IM_NAMES, GroundMotionRecord, extract_ims, response_spectrum
from subsetuq.harness import ExperimentConfig, Method, build_dataset, cluster_records, read_tidy
from subsetuq.lowdisc import SamplerConfig, Scheme, halton_sample, lhs_sample, sobol_sample
from subsetuq.masking import cluster_counts, cluster_quotas, stratified_mask, uniform_mask
from subsetuq.structsim import simulate

criterion = pytest.mark.criterion
TRACES: list[np.ndarray] = []
ENSEMBLE_CHECKS: list[bool] = []


def _recording_als(real):
    def wrapped(*args, **kwargs):
        res = real(*args, **kwargs)
        TRACES.append(res.trace)
        return res
    return wrapped


def _checked_ensemble(real):
    def wrapped(a, b):
        out = real(a, b)
        a, b = np.asarray(a), np.asarray(b)
        ENSEMBLE_CHECKS.append(bool(np.all(np.abs(out - (a + b) / 2) <= 1e-15 * np.maximum(np.abs(out), 1e-300))))
        return out
    return wrapped


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """The default experiment through the CLI, with ALS traces and ensemble calls recorded."""
    out = tmp_path_factory.mktemp("default_run")
    mp = pytest.MonkeyPatch()
    real_als = completion.als_complete
    mp.setattr(completion, "als_complete", _recording_als(real_als))
    mp.setattr(harness, "als_complete", _recording_als(real_als))
    mp.setattr(harness, "ensemble", _checked_ensemble(harness.ensemble))
    try:
        t0 = time.perf_counter()
        code = main(["experiment", "--out", str(out)])
        elapsed = time.perf_counter() - t0
    finally:
        mp.undo()
    assert code == 0
    return out, elapsed


@pytest.fixture(scope="session")
def default_dataset():
    return build_dataset(ExperimentConfig())


# ---------------------------------------------------------------- 1


@criterion(1, "exact recovery of rank-3 100x10 data from a CR=0.5 uniform mask: median error < 1e-3, one completion < 1 s")
def test_exact_recovery_oracle(record_property):
    cfg = CompletionConfig(rank=3, reg=1e-10, max_sweeps=5000, tol=1e-15)
    errs, oracle, well_posed, times = [], [], [], []
    for seed in range(20):
        g = np.random.default_rng(seed)
        a, b = g.normal(size=(100, 3)), g.normal(size=(3, 10))
        x = a @ b
        mask = uniform_mask(100, 10, 0.5, seed)
        t0 = time.perf_counter()
        res = als_complete(x, mask, cfg)
        times.append(time.perf_counter() - t0)
        TRACES.append(res.trace)
        errs.append(masked_relative_error(x, res.estimate, mask))
        # diagnostics: rows with fewer than 3 observations cannot be identified by any method
        ok = mask.flags.sum(axis=1) >= 3
        well_posed.append(masked_relative_error(x[ok], res.estimate[ok], mask.flags[ok]))
        est = np.vstack([np.linalg.lstsq(b[:, w].T, x[i, w], rcond=None)[0] @ b for i, w in enumerate(mask.flags)])
        oracle.append(masked_relative_error(x, est, mask))
    med = float(np.median(errs))
    record_property("detail", f"median error {med:.3g}; known-B oracle median {np.median(oracle):.3g}; "
                              f"identifiable-rows median {np.median(well_posed):.2g}; max time {max(times):.2f}s")
    assert max(times) < 1.0
    assert med < 1e-3


# ---------------------------------------------------------------- 2


@criterion(2, "rank-1 closed form [[1,2],[2,?]] completes to 4 within 1e-6")
def test_rank_one_closed_form(record_property):
    x = np.array([[1.0, 2.0], [2.0, 0.0]])
    w = np.array([[True, True], [True, False]])
    res = als_complete(x, w, CompletionConfig(rank=1, reg=1e-10))
    TRACES.append(res.trace)
    record_property("detail", f"x22 = {res.estimate[1, 1]!r}")
    assert abs(res.estimate[1, 1] - 4.0) <= 1e-6


# ---------------------------------------------------------------- 3


@criterion(3, "ALS objective trace non-increasing on every acceptance run (slack 1e-12)")
def test_traces_non_increasing(default_run, record_property):
    assert TRACES
    worst = max(float(np.max(np.diff(t) / np.maximum(t[:-1], 1e-300), initial=-np.inf)) for t in TRACES)
    record_property("detail", f"{len(TRACES)} runs, worst relative step {worst:.2e}")
    for t in TRACES:
        assert np.all(np.diff(t) <= 1e-12 * np.abs(t[:-1]))


# ---------------------------------------------------------------- 4


@criterion(4, "default run: error strictly decreases over CR for every method and EDP; "
              "StratifiedPlusRegression <= Uniform at every CR; sweep <= 10 min")
def test_trend_reproduction(default_run, record_property):
    out, elapsed = default_run
    rep = read_tidy(out / "tidy.csv")
    cfg = ExperimentConfig()
    assert cfg.trials >= 20
    lines = []
    for edp in ("TopDisplacement", "BaseShear"):
        for method in Method:
            means = [rep.mean(edp, method, cr) for cr in cfg.cr_grid]
            lines.append(f"{edp}/{method.value}: " + " ".join(f"{m:.3f}" for m in means))
            assert all(b < a for a, b in zip(means, means[1:])), lines[-1]
        for cr in cfg.cr_grid:
            assert rep.mean(edp, Method.StratifiedPlusRegression, cr) <= rep.mean(edp, Method.Uniform, cr)
    record_property("detail", f"sweep {elapsed:.0f}s")
    print("\n".join(lines))
    assert elapsed <= 600


# ---------------------------------------------------------------- 5


@criterion(5, "every ensemble cell equals the mean of its two inputs to 1e-15")
def test_ensemble_identity(default_run, record_property):
    record_property("detail", f"{len(ENSEMBLE_CHECKS)} ensembles checked")
    assert ENSEMBLE_CHECKS and all(ENSEMBLE_CHECKS)


# ---------------------------------------------------------------- 6

FIXTURES = [
    np.array([[0.0], [0.1], [0.2], [10.0], [10.1], [10.2]]),
    np.array([[1.0, 1.0]] * 5 + [[8.0, 8.0]]),
    np.array([[0, 0], [0.2, 0.1], [0.1, 0.3], [5, 5], [5.2, 4.9], [9, 0], [9.1, 0.2], [8.8, -0.1]]),
    np.array([[0, 0], [1, 0], [0, 1], [1, 1], [6, 6], [7, 6], [6, 7], [20, 0], [21, 1], [20, 1]], dtype=float),
]


@criterion(6, "PAM cost equals brute-force optimum on <=10-point fixtures; SWAP cost never increases")
def test_kmedoids_oracle(default_dataset, record_property):
    runs = 0
    for x in FIXTURES:
        d = pairwise_distances(x)
        for k in range(2, 5):
            best = min(d[:, list(c)].min(axis=1).sum() for c in itertools.combinations(range(len(x)), k))
            res = kmedoids(x, k)
            runs += 1
            assert res.cost == pytest.approx(best, rel=1e-12, abs=1e-12)
            assert np.all(np.diff(res.trace) <= 0)
    res = cluster_records(default_dataset, ExperimentConfig())
    assert np.all(np.diff(res.trace) <= 0) and res.cost <= res.trace[0]
    record_property("detail", f"{runs} fixture runs; default clustering sizes {res.sizes().tolist()}")


# ---------------------------------------------------------------- 7


@criterion(7, "per-column mask counts equal round(N*CR) for both strategies over 50 seeds; quotas {90,10}, b=10 -> {9,1}")
def test_mask_budgets(default_dataset):
    asg = cluster_records(default_dataset, ExperimentConfig())
    for cr in (0.1, 0.2, 0.3, 0.4, 0.5):
        b = column_budget(100, cr)
        quotas = cluster_quotas(asg.sizes(), b)
        for seed in range(50):
            u = uniform_mask(100, 10, cr, seed)
            s = stratified_mask(asg, 10, cr, seed)
            assert np.all(u.flags.sum(axis=0) == b)
            assert np.all(s.flags.sum(axis=0) == b)
            assert np.all(cluster_counts(s, asg.labels) == quotas[:, None])
    assert cluster_quotas([90, 10], 10).tolist() == [9, 1]


# ---------------------------------------------------------------- 8


@criterion(8, "LHS single occupancy per interval per dimension for (10,18) and (100,5) over 10 seeds")
def test_lhs_occupancy():
    for count, dims in ((10, 18), (100, 5)):
        for seed in range(10):
            x = lhs_sample(SamplerConfig(Scheme.LatinHypercube, count, dims, seed))
            for d in range(dims):
                assert np.array_equal(np.sort(np.floor(x[:, d] * count).astype(int)), np.arange(count))


# ---------------------------------------------------------------- 9


@criterion(9, "Halton base 2 starts 1/2, 1/4, 3/4, 1/8; Sobol dim 1 starts 0.5, 0.75, 0.25 exactly")
def test_quasi_random_oracles():
    assert halton_sample(SamplerConfig(Scheme.Halton, 4, 1))[:, 0].tolist() == [0.5, 0.25, 0.75, 0.125]
    assert sobol_sample(SamplerConfig(Scheme.Sobol, 3, 1))[:, 0].tolist() == [0.5, 0.75, 0.25]


# ---------------------------------------------------------------- 10


@criterion(10, "undamped SDOF 10 periods at dt=T/200 within 1%; resonance within 5% of 1/(2 zeta); rigid PSa within 2% of PGA")
def test_integrator_oracles(record_property):
    period = 1.0
    w = 2 * np.pi / period
    dt = period / 200
    n = 10 * 200 + 1
    hist = simulate([1.0], [w * w], [np.inf], 0.0, 0.0, 0.0, np.zeros(n), dt, u0=[1.0], keep_history=True)
    free_err = float(np.max(np.abs(hist.u[:, 0] - np.cos(w * dt * np.arange(n)))))

    zeta, dt2 = 0.05, 0.005
    t = dt2 * np.arange(int(80 / dt2) + 1)
    _, _, sd = response_spectrum(GroundMotionRecord("h", dt2, np.sin(w * t)), [period], zeta)
    amp = sd[0] * w * w
    dt3 = 0.002
    t3 = dt3 * np.arange(int(10 / dt3) + 1)
    a = (t3 / 3) ** 2 * np.exp(2 * (1 - t3 / 3)) * (np.sin(2 * np.pi * 1.3 * t3) + 0.5 * np.sin(2 * np.pi * 3.1 * t3 + 1))
    psa, _, _ = response_spectrum(GroundMotionRecord("r", dt3, a), [0.01], 0.05)
    rigid = psa[0] / np.max(np.abs(a))
    record_property("detail", f"free {free_err:.1e}, resonance {amp * 2 * zeta:.4f}, rigid {rigid:.4f}")
    assert free_err <= 0.01
    assert abs(amp * 2 * zeta - 1) <= 0.05
    assert abs(rigid - 1) <= 0.02


# ---------------------------------------------------------------- 11


@criterion(11, "constant |a| = g for 1 s: Arias = pi g / 2 and CAV = g within 1e-10 relative")
def test_im_closed_forms():
    rec = GroundMotionRecord("stub", 0.01, np.full(101, G))
    ims = dict(zip(IM_NAMES, extract_ims(rec, [0.7, 0.25, 0.15, 0.11, 0.09])))
    assert abs(ims["Arias"] / (math.pi * G / 2) - 1) <= 1e-10
    assert abs(ims["CAV"] / G - 1) <= 1e-10


# ---------------------------------------------------------------- 12


@criterion(12, "re-running the default experiment with the same seed gives a byte-identical tidy CSV")
def test_determinism(default_run, tmp_path):
    out, _ = default_run
    assert main(["experiment", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "tidy.csv").read_bytes() == (out / "tidy.csv").read_bytes()
