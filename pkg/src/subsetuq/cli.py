"""Command-line entry point: ``subsetuq <subcommand> [options]``.

Global options (before or after the subcommand): ``--seed``, ``--config`` (JSON
experiment config), ``--out`` (output directory, default ``.``).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as d
from .cluster import Distance, default_k, kmedoids, standardize
from .completion import CompletionConfig, als_complete, select_rank
from .groundmotion import GmSynthParams, im_table, load_record, save_record, synth_record
from .harness import ExperimentConfig, build_dataset, emit_report, read_tidy, run_experiment, synth_suite
from .lowdisc import SamplerConfig, Scheme, sample
from .masking import stratified_mask, uniform_mask
from .regression import ModelKind, RegressionConfig, fit_predict
from .structsim import (
    MaterialSample,
    StructureModel,
    build_edp_matrices,
    default_cov,
    modal_periods,
    sample_materials,
)

log = logging.getLogger("subsetuq")


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _seed(args, default: int = 0) -> int:
    return args.seed if args.seed is not None else default


def _model(path) -> StructureModel:
    return StructureModel.from_json(path) if path else StructureModel.default()


def _records(paths):
    return [load_record(p) for p in paths]


def cmd_synth_gm(args):
    out = _out(args)
    if args.suite:
        records, families = synth_suite(args.suite, _seed(args, 2021), args.dt)
        for r in records:
            save_record(r, out / f"{r.id}.csv")
        (out / "families.csv").write_text(
            "id,family\n" + "".join(f"{r.id},{f}\n" for r, f in zip(records, families))
        )
        print(f"wrote {len(records)} records to {out}")
        return
    params = GmSynthParams(
        duration=args.duration, peak_fraction=args.peak_fraction, shape_exponent=args.shape_exponent,
        filter_freq=args.freq, filter_damping=args.filter_damping, target_pga=args.pga,
        seed=_seed(args), dt=args.dt,
    )
    rec = synth_record(params, args.id)
    save_record(rec, out / f"{rec.id}.csv")
    print(out / f"{rec.id}.csv")


def cmd_features(args):
    model = _model(args.model)
    periods = modal_periods(model)
    table = im_table(_records(args.records), periods)
    path = _out(args) / args.name
    d.write_features(table, path)
    print(path)


def cmd_sample_materials(args):
    model = _model(args.model)
    nominal = MaterialSample.from_json(args.nominal) if args.nominal else MaterialSample.nominal(model.n_stories)
    cov = default_cov(nominal.n_stories) if args.cov is None else float(args.cov)
    table = sample_materials(nominal, cov, args.count, _seed(args))
    path = _out(args) / args.name
    d.write_features(table, path)
    print(path)


def cmd_simulate(args):
    model = _model(args.model)
    materials = d.read_features(args.materials)
    res = build_edp_matrices(_records(args.records), materials, model, damping=args.damping)
    out = _out(args)
    d.write_matrix(res.top_displacement, out / "edp_TopDisplacement.csv")
    d.write_matrix(res.base_shear, out / "edp_BaseShear.csv")
    if res.collapsed.any():
        log.warning("%d cells hit the collapse cap", int(res.collapsed.sum()))
    print(f"simulated {res.collapsed.size} cells into {out}")


def cmd_cluster(args):
    table = d.read_features(args.features)
    k = args.k or default_k(table.values.shape[0])
    asg = kmedoids(standardize(table), k, Distance(args.distance), seed=_seed(args))
    out = _out(args)
    medoid = set(asg.medoid_indices.tolist())
    lines = ["row_id,label,is_medoid"] + [
        f"{rid},{lab},{int(i in medoid)}" for i, (rid, lab) in enumerate(zip(table.row_ids, asg.labels))
    ]
    (out / "clusters.csv").write_text("\n".join(lines) + "\n")
    (out / "medoids.csv").write_text(
        "label,row_index,row_id\n"
        + "".join(f"{c},{i},{table.row_ids[i]}\n" for c, i in enumerate(asg.medoid_indices))
    )
    print(f"k={k} cost={asg.cost!r} sizes={asg.sizes().tolist()}")


def cmd_sample(args):
    if args.mask:
        mat = d.read_matrix(args.mask)
        n, m = mat.shape
        if args.clusters:
            rows = Path(args.clusters).read_text().splitlines()[1:]
            labels = np.array([int(r.split(",")[1]) for r in rows if r])
            from .cluster import ClusterAssignment

            k = int(labels.max()) + 1
            medoids = np.array([np.flatnonzero(labels == c)[0] for c in range(k)])
            asg = ClusterAssignment(medoids, labels, float("nan"))
            mask = stratified_mask(asg, m, args.cr, _seed(args), n_rows=n)
        else:
            mask = uniform_mask(n, m, args.cr, _seed(args))
        path = _out(args) / args.name
        d.write_mask(mask, path, mat.row_ids, mat.col_ids)
        print(path)
        return
    pts = sample(SamplerConfig(Scheme(args.scheme), args.count, args.dims, _seed(args)))
    lines = [",".join(f"u{i + 1}" for i in range(args.dims))] + [",".join(repr(float(v)) for v in row) for row in pts]
    path = _out(args) / args.name
    path.write_text("\n".join(lines) + "\n")
    print(path)


def cmd_complete(args):
    mat = d.read_matrix(args.matrix)
    mask = d.read_mask(args.mask)
    cfg = CompletionConfig(rank=args.rank, reg=args.reg, max_sweeps=args.max_sweeps, tol=args.tol,
                           seed=_seed(args), scaling=args.scaling, init=args.init)
    if args.rank_grid:
        cfg = replace(cfg, rank=select_rank(mat, mask, args.rank_grid, args.holdout, _seed(args), cfg))
    res = als_complete(mat, mask, cfg)
    out = _out(args)
    d.write_estimate(res.estimate, mat, out / "estimate.csv")
    (out / "trace.csv").write_text("sweep,objective\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(res.trace)))
    (out / "completion_meta.json").write_text(json.dumps(res.metadata, indent=2) + "\n")
    print(json.dumps(res.metadata))


def cmd_regress(args):
    mat = d.read_matrix(args.matrix)
    mask = d.read_mask(args.mask)
    bw = args.bandwidth if args.bandwidth == "median" else float(args.bandwidth)
    cfg = RegressionConfig(ModelKind(args.model), args.lam, bw, _seed(args))
    est = fit_predict(d.read_features(args.gm_features), d.read_features(args.material_features), mat, mask, cfg)
    out = _out(args)
    d.write_estimate(est, mat, out / "regression_estimate.csv")
    meta = {"model": cfg.model.value, "lambda": cfg.lam, "bandwidth": args.bandwidth,
            "features": "z-scored IM row + z-scored material row", "target": "z-scored with observed mean/std"}
    (out / "regression_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(out / "regression_estimate.csv")


def cmd_experiment(args):
    cfg = _config(args)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    out = _out(args)
    log.info("building dataset (%d x %d simulations)", cfg.n_records, cfg.n_materials)
    ds = build_dataset(cfg)
    for kind, mat in ds.edp.items():
        d.write_matrix(mat, out / f"edp_{kind.value}.csv")
    d.write_features(ds.ims, out / "features_gm.csv")
    d.write_features(ds.materials, out / "features_material.csv")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    report = run_experiment(cfg, ds, progress=lambda cr, t: log.debug("cr=%s trial=%d", cr, t))
    paths = emit_report(report, out)
    for s in report.summary():
        print(f"{s['edp']:16s} {s['method']:25s} cr={s['cr']:.2f} mean={s['mean']:.4f} std={s['std']:.4f}")
    print(f"outputs in {out}: {', '.join(p.name for p in paths.values())}")


def cmd_report(args):
    report = read_tidy(args.tidy)
    paths = emit_report(report, _out(args))
    print(", ".join(str(p) for p in paths.values()))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment config JSON")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="subsetuq", parents=[common], description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gm", parents=[common], help="synthesize ground-motion records")
    s.add_argument("--suite", type=int, help="generate the experiment's N-record suite instead of one record")
    s.add_argument("--id", default="gm")
    s.add_argument("--duration", type=float, default=20.0)
    s.add_argument("--peak-fraction", type=float, default=0.25)
    s.add_argument("--shape-exponent", type=float, default=2.0)
    s.add_argument("--freq", type=float, default=2.0)
    s.add_argument("--filter-damping", type=float, default=0.6)
    s.add_argument("--pga", type=float, default=2.0)
    s.add_argument("--dt", type=float, default=0.01)
    s.set_defaults(func=cmd_synth_gm)

    s = sub.add_parser("features", parents=[common], help="31-entry IM table for record CSVs")
    s.add_argument("records", nargs="+")
    s.add_argument("--model", help="structure model JSON (modal periods)")
    s.add_argument("--name", default="features_gm.csv")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("sample-materials", parents=[common], help="LHS material samples")
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--model")
    s.add_argument("--nominal", help="nominal material JSON")
    s.add_argument("--cov", help="single coefficient of variation for every parameter")
    s.add_argument("--name", default="features_material.csv")
    s.set_defaults(func=cmd_sample_materials)

    s = sub.add_parser("simulate", parents=[common], help="run every record x material simulation")
    s.add_argument("records", nargs="+")
    s.add_argument("--materials", required=True)
    s.add_argument("--model")
    s.add_argument("--damping", choices=["tangent", "initial"], default="tangent")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("cluster", parents=[common], help="k-medoids on a feature table")
    s.add_argument("features")
    s.add_argument("-k", type=int)
    s.add_argument("--distance", choices=[x.value for x in Distance], default="Euclidean")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("sample", parents=[common], help="point sets, or an observation mask with --mask")
    s.add_argument("--scheme", choices=[x.value for x in Scheme], default="LatinHypercube")
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--dims", type=int, default=2)
    s.add_argument("--mask", metavar="MATRIX_CSV", help="build a mask shaped like this matrix")
    s.add_argument("--cr", type=float, default=0.2)
    s.add_argument("--clusters", help="clusters.csv from `cluster`; stratified mask")
    s.add_argument("--name", default="samples.csv")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("complete", parents=[common], help="ALS matrix completion")
    s.add_argument("matrix")
    s.add_argument("mask")
    s.add_argument("--rank", type=int, default=3)
    s.add_argument("--rank-grid", type=int, nargs="+")
    s.add_argument("--holdout", type=float, default=0.2)
    s.add_argument("--reg", type=float, default=1e-2)
    s.add_argument("--max-sweeps", type=int, default=500)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--scaling", choices=["rms", "none"], default="rms")
    s.add_argument("--init", choices=["svd", "gaussian"], default="svd")
    s.set_defaults(func=cmd_complete)

    s = sub.add_parser("regress", parents=[common], help="regression estimate from features")
    s.add_argument("matrix")
    s.add_argument("mask")
    s.add_argument("--gm-features", required=True)
    s.add_argument("--material-features", required=True)
    s.add_argument("--model", choices=[x.value for x in ModelKind], default="KernelRidgeRbf")
    s.add_argument("--lam", type=float, default=1e-2)
    s.add_argument("--bandwidth", default="median")
    s.set_defaults(func=cmd_regress)

    s = sub.add_parser("experiment", parents=[common], help="full CR x method x trial sweep")
    s.add_argument("--trials", type=int)
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", parents=[common], help="summary CSV and SVG charts from a tidy CSV")
    s.add_argument("tidy")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # parent actions are shared with every subparser, so defaults are filled in here
    for name, value in (("seed", None), ("config", None), ("out", "."), ("verbose", 0)):
        if not hasattr(args, name):
            setattr(args, name, value)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
