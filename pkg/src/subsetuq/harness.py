"""End-to-end experiment: build the simulated dataset, sweep CR x method x trial, report errors.

Seed discipline
---------------
Every random stream is seeded by ``derive_seed(master, *keys)``: numpy's
``SeedSequence`` hashes the master seed together with integer keys and the
first 64-bit word of its state is the derived seed. Keys used here:

* ``(STREAM_RECORDS, i)``            synthesis parameters and noise of record i
* ``(STREAM_MATERIALS,)``            material LHS
* ``(STREAM_MASK, method, cr_key, trial)``  mask seed; columns are mixed in by the masking module
* ``(STREAM_COMPLETION, method, cr_key, trial, edp)``  ALS initialization

``cr_key`` is ``round(cr * 1e6)`` so a given CR keeps its streams when the grid changes.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import Distance, ClusterAssignment, default_k, kmedoids, standardize
from .completion import CompletionConfig, als_complete, select_rank
from .data import EdpKind, EdpMatrix, FeatureTable, ObservationMask, masked_relative_error
from .groundmotion import GmSynthParams, GroundMotionRecord, im_table, synth_record
from .masking import cluster_counts, stratified_mask, uniform_mask
from .regression import RegressionConfig, ensemble, fit_predict
from .structsim import (
    MaterialSample,
    StructureModel,
    build_edp_matrices,
    default_cov,
    modal_periods,
    sample_materials,
)

STREAM_RECORDS, STREAM_MATERIALS, STREAM_MASK, STREAM_COMPLETION = 1, 2, 3, 4


class Method(str, enum.Enum):
    Uniform = "Uniform"
    Stratified = "Stratified"
    StratifiedPlusRegression = "StratifiedPlusRegression"


EDP_KINDS = (EdpKind.TopDisplacement, EdpKind.BaseShear)


def derive_seed(master: int, *keys: int) -> int:
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def cr_key(cr: float) -> int:
    return int(round(cr * 1e6))


# ground-motion families; ranges are uniform draws per record
RECORD_FAMILIES = {
    #               share  duration s   freq Hz     filt. damping  PGA m/s2    peak frac     shape exp
    "far_field":   (0.40, (25.0, 40.0), (0.8, 2.0), (0.3, 0.6), (0.5, 2.0), (0.30, 0.45), (2.0, 3.0)),
    "near_field":  (0.30, (8.0, 15.0), (3.0, 7.0), (0.4, 0.7), (1.5, 4.0), (0.15, 0.30), (1.5, 2.5)),
    "soft_soil":   (0.22, (20.0, 35.0), (0.4, 1.0), (0.2, 0.4), (0.5, 2.0), (0.25, 0.40), (2.0, 3.0)),
    "rare_severe": (0.08, (15.0, 25.0), (1.2, 2.5), (0.3, 0.5), (5.0, 9.0), (0.20, 0.35), (2.0, 3.0)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    n_records: int = 100
    n_materials: int = 10
    cr_grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    trials: int = 50
    methods: tuple[Method, ...] = tuple(Method)
    seed: int = 2021
    record_dt: float = 0.01
    n_clusters: int | None = None  # None -> max(2, round(N/10))
    distance: Distance = Distance.Euclidean
    damping: str = "tangent"
    completion: CompletionConfig = CompletionConfig()
    rank_grid: tuple[int, ...] | None = (1, 2, 3)  # hold-out rank selection per trial; None keeps completion.rank
    holdout_fraction: float = 0.2
    regression: RegressionConfig = RegressionConfig()

    def __post_init__(self):
        object.__setattr__(self, "cr_grid", tuple(float(c) for c in self.cr_grid))
        object.__setattr__(self, "methods", tuple(Method(m) for m in self.methods))
        object.__setattr__(self, "distance", Distance(self.distance))
        if isinstance(self.completion, dict):
            object.__setattr__(self, "completion", CompletionConfig(**self.completion))
        if self.rank_grid is not None:
            object.__setattr__(self, "rank_grid", tuple(int(r) for r in self.rank_grid))
        if isinstance(self.regression, dict):
            object.__setattr__(self, "regression", RegressionConfig(**self.regression))
        if not self.cr_grid or any(not 0.0 < c <= 1.0 for c in self.cr_grid):
            raise ValueError("cr_grid values must lie in (0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.methods:
            raise ValueError("methods must be non-empty")
        if self.n_records < 2 or self.n_materials < 2:
            raise ValueError("need at least two records and two materials")

    @property
    def k(self) -> int:
        return self.n_clusters if self.n_clusters is not None else default_k(self.n_records)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = [m.value for m in self.methods]
        d["distance"] = self.distance.value
        d["cr_grid"] = list(self.cr_grid)
        d["rank_grid"] = list(self.rank_grid) if self.rank_grid is not None else None
        d["regression"]["model"] = self.regression.model.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "cr_grid" in d:
            d["cr_grid"] = tuple(d["cr_grid"])
        if "methods" in d:
            d["methods"] = tuple(d["methods"])
        if d.get("rank_grid") is not None:
            d["rank_grid"] = tuple(d["rank_grid"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Dataset:
    records: tuple[GroundMotionRecord, ...]
    families: tuple[str, ...]
    ims: FeatureTable
    materials: FeatureTable
    edp: dict  # EdpKind -> EdpMatrix
    collapsed: np.ndarray
    periods: np.ndarray
    model: StructureModel

    def matrix(self, kind: EdpKind) -> EdpMatrix:
        return self.edp[EdpKind(kind)]


def _family_counts(n: int) -> list[str]:
    names = list(RECORD_FAMILIES)
    ideal = np.array([RECORD_FAMILIES[k][0] for k in names]) * n
    counts = np.floor(ideal).astype(int)
    for c in sorted(range(len(names)), key=lambda c: (-(ideal[c] - counts[c]), c))[: n - counts.sum()]:
        counts[c] += 1
    return [name for name, c in zip(names, counts) for _ in range(c)]


def synth_suite(n: int, seed: int, dt: float = 0.01):
    """``n`` records drawn from :data:`RECORD_FAMILIES` in fixed shares, order shuffled."""
    families = _family_counts(n)
    order = np.random.default_rng(derive_seed(seed, STREAM_RECORDS)).permutation(n)
    families = [families[i] for i in order]
    records = []
    for i, fam in enumerate(families):
        rng = np.random.default_rng(derive_seed(seed, STREAM_RECORDS, i))
        _, dur, freq, zf, pga, tp, c = RECORD_FAMILIES[fam]
        draw = lambda lohi: float(rng.uniform(*lohi))  # noqa: E731
        params = GmSynthParams(
            duration=round(draw(dur), 2),
            peak_fraction=draw(tp),
            shape_exponent=draw(c),
            filter_freq=draw(freq),
            filter_damping=draw(zf),
            target_pga=draw(pga),
            seed=int(rng.integers(2**63)),
            dt=dt,
        )
        records.append(synth_record(params, f"gm{i:03d}"))
    return tuple(records), tuple(families)


def build_dataset(config: ExperimentConfig, model: StructureModel | None = None) -> Dataset:
    model = model or StructureModel.default()
    records, families = synth_suite(config.n_records, config.seed, config.record_dt)
    nominal = MaterialSample.nominal(model.n_stories)
    periods = modal_periods(model, nominal)
    ims = im_table(records, periods)
    materials = sample_materials(
        nominal, default_cov(model.n_stories), config.n_materials, derive_seed(config.seed, STREAM_MATERIALS)
    )
    res = build_edp_matrices(records, materials, model, damping=config.damping)
    return Dataset(
        records=records,
        families=families,
        ims=ims,
        materials=materials,
        edp={EdpKind.TopDisplacement: res.top_displacement, EdpKind.BaseShear: res.base_shear},
        collapsed=res.collapsed,
        periods=periods,
        model=model,
    )


def cluster_records(dataset: Dataset, config: ExperimentConfig) -> ClusterAssignment:
    return kmedoids(standardize(dataset.ims), config.k, config.distance, seed=config.seed)


# ------------------------------------------------------------------ experiment


@dataclass(frozen=True)
class TrialError:
    edp: str
    method: str
    cr: float
    trial: int
    error: float


@dataclass
class ErrorReport:
    rows: list[TrialError]
    fingerprint: dict = field(default_factory=dict)
    cluster_counts: list[tuple] = field(default_factory=list)  # (cr, trial, column, cluster, count)
    degenerate: list[tuple] = field(default_factory=list)  # (edp, method, cr, trial) scored 0 with nothing hidden

    def raw(self, edp, method, cr) -> np.ndarray:
        edp, method = EdpKind(edp).value, Method(method).value
        vals = [r for r in self.rows if r.edp == edp and r.method == method and r.cr == cr]
        return np.array([r.error for r in sorted(vals, key=lambda r: r.trial)])

    def keys(self):
        seen = {}
        for r in self.rows:
            seen.setdefault((r.edp, r.method, r.cr), None)
        return list(seen)

    def summary(self) -> list[dict]:
        out = []
        for edp, method, cr in self.keys():
            v = self.raw(edp, method, cr)
            out.append(
                {"edp": edp, "method": method, "cr": cr, "n": int(v.size), "mean": float(np.mean(v)),
                 "std": float(np.std(v)), "min": float(np.min(v)), "max": float(np.max(v))}
            )
        return out

    def mean(self, edp, method, cr) -> float:
        return float(np.mean(self.raw(edp, method, cr)))


def _score(truth: EdpMatrix, estimate, mask: ObservationMask):
    if mask.flags.all():
        return 0.0, True
    return masked_relative_error(truth, estimate, mask), False


def _complete(config: ExperimentConfig, truth: EdpMatrix, mask: ObservationMask, seed: int) -> np.ndarray:
    cfg = replace(config.completion, seed=seed)
    if config.rank_grid is not None:
        grid = [r for r in config.rank_grid if r < min(truth.shape)]
        if not grid:
            raise ValueError(f"no rank in {config.rank_grid} is below min(N, M) = {min(truth.shape)}")
        rank = select_rank(truth, mask, grid, config.holdout_fraction, seed, cfg)
        cfg = replace(cfg, rank=rank)
    return als_complete(truth, mask, cfg).estimate


def run_experiment(config: ExperimentConfig, dataset: Dataset, assignment: ClusterAssignment | None = None,
                   progress=None) -> ErrorReport:
    """Score every (EDP, method, CR, trial); the two stratified methods share one mask per trial."""
    n, m = dataset.matrix(EdpKind.TopDisplacement).shape
    if n != config.n_records or m != config.n_materials:
        raise ValueError(f"dataset is {n}x{m}, config expects {config.n_records}x{config.n_materials}")
    methods = config.methods
    need_strat = any(mt is not Method.Uniform for mt in methods)
    if need_strat and assignment is None:
        assignment = cluster_records(dataset, config)

    rows: list[TrialError] = []
    counts: list[tuple] = []
    degenerate: list[tuple] = []
    for cr in config.cr_grid:
        ck = cr_key(cr)
        for trial in range(config.trials):
            masks = {}
            if Method.Uniform in methods:
                masks[Method.Uniform] = uniform_mask(n, m, cr, derive_seed(config.seed, STREAM_MASK, 0, ck, trial))
            if need_strat:
                smask = stratified_mask(assignment, m, cr, derive_seed(config.seed, STREAM_MASK, 1, ck, trial), n)
                masks[Method.Stratified] = smask
                for cl, row in enumerate(cluster_counts(smask, assignment.labels)):
                    for col, c in enumerate(row):
                        counts.append((cr, trial, col, cl, int(c)))
            for e, kind in enumerate(EDP_KINDS):
                truth = dataset.matrix(kind)
                completed = {}
                for mi, key in ((0, Method.Uniform), (1, Method.Stratified)):
                    if key in masks:
                        completed[key] = _complete(config, truth, masks[key],
                                                   derive_seed(config.seed, STREAM_COMPLETION, mi, ck, trial, e))
                for method in methods:
                    try:
                        if method is Method.StratifiedPlusRegression:
                            mask = masks[Method.Stratified]
                            reg = fit_predict(dataset.ims, dataset.materials, truth, mask, config.regression)
                            est = ensemble(completed[Method.Stratified], reg)
                        else:
                            mask = masks[method]
                            est = completed[method]
                        err, degen = _score(truth, est, mask)
                    except Exception as exc:
                        raise RuntimeError(
                            f"trial failed: edp={kind.value} method={method.value} cr={cr} trial={trial} "
                            f"seed={config.seed}: {exc}"
                        ) from exc
                    if degen:
                        degenerate.append((kind.value, method.value, cr, trial))
                    rows.append(TrialError(kind.value, method.value, cr, trial, err))
            if progress is not None:
                progress(cr, trial)

    order = {k.value: i for i, k in enumerate(EDP_KINDS)}
    morder = {mt.value: i for i, mt in enumerate(Method)}
    rows.sort(key=lambda r: (order[r.edp], morder[r.method], r.cr, r.trial))
    fingerprint = {
        "package_version": __version__,
        "config_hash": config.fingerprint(),
        "master_seed": config.seed,
        "n_records": n,
        "n_materials": m,
        "n_clusters": assignment.k if assignment is not None else None,
        "cluster_sizes": assignment.sizes().tolist() if assignment is not None else None,
        "completion_scaling": config.completion.scaling,
        "completion_init": config.completion.init,
        "rank_grid": list(config.rank_grid) if config.rank_grid is not None else None,
        "regression_features": "z-scored IM row + z-scored material row; z-scored target",
        "data_hash": dataset_hash(dataset),
    }
    return ErrorReport(rows, fingerprint, counts, degenerate)


def dataset_hash(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for kind in EDP_KINDS:
        h.update(np.ascontiguousarray(dataset.matrix(kind).values).tobytes())
    h.update(np.ascontiguousarray(dataset.ims.values).tobytes())
    h.update(np.ascontiguousarray(dataset.materials.values).tobytes())
    return h.hexdigest()[:16]


# ------------------------------------------------------------------ reporting


def write_tidy(report: ErrorReport, path) -> None:
    lines = ["edp,method,cr,trial,error"]
    lines += [f"{r.edp},{r.method},{r.cr!r},{r.trial},{r.error!r}" for r in report.rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_tidy(path) -> ErrorReport:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "edp,method,cr,trial,error":
        raise ValueError(f"{path}: not a tidy error CSV")
    rows = []
    for line in text[1:]:
        if not line.strip():
            continue
        edp, method, cr, trial, err = line.split(",")
        rows.append(TrialError(edp, method, float(cr), int(trial), float(err)))
    return ErrorReport(rows)


def write_summary(report: ErrorReport, path) -> None:
    lines = ["edp,method,cr,n,mean,std,min,max"]
    for s in report.summary():
        lines.append(
            f"{s['edp']},{s['method']},{s['cr']!r},{s['n']},{s['mean']!r},{s['std']!r},{s['min']!r},{s['max']!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


_COLORS = {"Uniform": "#1f77b4", "Stratified": "#ff7f0e", "StratifiedPlusRegression": "#2ca02c"}


def error_chart_svg(report: ErrorReport, edp: str, width: int = 640, height: int = 420) -> str:
    """Mean error (log axis) against CR, one polyline per method with +/- one std bars."""
    stats = [s for s in report.summary() if s["edp"] == edp]
    if not stats:
        raise ValueError(f"no rows for {edp}")
    left, right, top, bottom = 80, 190, 40, 60
    pw, ph = width - left - right, height - top - bottom
    crs = sorted({s["cr"] for s in stats})
    lows = [max(s["mean"] - s["std"], s["min"], 1e-12) for s in stats]
    highs = [s["mean"] + s["std"] for s in stats]
    positive = [v for v in lows + [s["mean"] for s in stats] if v > 0]
    y_lo = 10 ** math.floor(math.log10(min(positive))) if positive else 1e-3
    y_hi = 10 ** math.ceil(math.log10(max(max(highs), y_lo * 10)))
    x_lo, x_hi = (crs[0] - 0.05, crs[-1] + 0.05) if len(crs) > 1 else (crs[0] - 0.1, crs[0] + 0.1)

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        y = max(y, y_lo)
        return top + (math.log10(y_hi) - math.log10(y)) / (math.log10(y_hi) - math.log10(y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{edp}: mean normalized error</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    dec = int(round(math.log10(y_lo)))
    while 10.0**dec <= y_hi * 1.0001:
        y = py(10.0**dec)
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{dec}</text>')
        dec += 1
    for cr in crs:
        x = px(cr)
        out.append(f'<text x="{x:.1f}" y="{top + ph + 18}" text-anchor="middle">{cr:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">compression ratio CR</text>')
    out.append(
        f'<text x="20" y="{top + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 20 {top + ph / 2:.1f})">'
        "normalized estimation error</text>"
    )
    methods = [m.value for m in Method if any(s["method"] == m.value for s in stats)]
    for i, method in enumerate(methods):
        ms = sorted((s for s in stats if s["method"] == method), key=lambda s: s["cr"])
        color = _COLORS.get(method, "black")
        pts = " ".join(f"{px(s['cr']):.2f},{py(s['mean']):.2f}" for s in ms)
        out.append(f'<polyline class="series" data-method="{method}" points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for s in ms:
            x = px(s["cr"])
            lo = max(s["mean"] - s["std"], s["min"])
            hi = s["mean"] + s["std"]
            out.append(f'<line x1="{x:.2f}" y1="{py(lo):.2f}" x2="{x:.2f}" y2="{py(hi):.2f}" stroke="{color}"/>')
            out.append(f'<circle cx="{x:.2f}" cy="{py(s["mean"]):.2f}" r="3" fill="{color}"/>')
        ly = top + 20 + 20 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 36}" y="{ly + 4}">{method}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(report: ErrorReport, out_dir) -> dict:
    """Write tidy.csv, summary.csv, one SVG per EDP, fingerprint.json and cluster_counts.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"tidy": out / "tidy.csv", "summary": out / "summary.csv"}
    write_tidy(report, paths["tidy"])
    write_summary(report, paths["summary"])
    for edp in dict.fromkeys(r.edp for r in report.rows):
        p = out / f"error_{edp}.svg"
        p.write_text(error_chart_svg(report, edp))
        paths[f"svg_{edp}"] = p
    if report.fingerprint:
        paths["fingerprint"] = out / "fingerprint.json"
        fp = dict(report.fingerprint, degenerate=[list(d) for d in report.degenerate])
        paths["fingerprint"].write_text(json.dumps(fp, indent=2, sort_keys=True) + "\n")
    if report.cluster_counts:
        paths["cluster_counts"] = out / "cluster_counts.csv"
        lines = ["cr,trial,column,cluster,count"] + [f"{c[0]!r},{c[1]},{c[2]},{c[3]},{c[4]}" for c in report.cluster_counts]
        paths["cluster_counts"].write_text("\n".join(lines) + "\n")
    return paths
