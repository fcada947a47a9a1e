"""Full CR x method x trial sweep with timing, then the summary table and charts.

    python3 scripts/run_sweep.py --out runs/sweep [--config cfg.json] [--trials 20]
"""
import argparse
import time
from dataclasses import replace
from pathlib import Path

from subsetuq.harness import ExperimentConfig, Method, build_dataset, emit_report, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="ExperimentConfig as JSON")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--out", default="runs/sweep")
    args = ap.parse_args()
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.trials:
        cfg = replace(cfg, trials=args.trials)

    t0 = time.perf_counter()
    ds = build_dataset(cfg)
    t1 = time.perf_counter()
    report = run_experiment(cfg, ds)
    t2 = time.perf_counter()
    emit_report(report, Path(args.out))
    print(f"dataset {t1 - t0:.1f}s, sweep {t2 - t1:.1f}s")

    for edp in ("TopDisplacement", "BaseShear"):
        print(f"\n{edp}: mean error by CR")
        print(f"{'method':26s}" + "".join(f"{cr:>8.2f}" for cr in cfg.cr_grid))
        for method in cfg.methods:
            print(f"{method.value:26s}" + "".join(f"{report.mean(edp, method, cr):8.3f}" for cr in cfg.cr_grid))
        if Method.Uniform in cfg.methods and Method.StratifiedPlusRegression in cfg.methods:
            wins = sum(report.mean(edp, Method.StratifiedPlusRegression, cr) <= report.mean(edp, Method.Uniform, cr)
                       for cr in cfg.cr_grid)
            print(f"stratified+regression <= uniform at {wins}/{len(cfg.cr_grid)} CR values")


if __name__ == "__main__":
    main()
