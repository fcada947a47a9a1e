"""Build the simulated dataset and write its matrices and feature tables.

    python3 scripts/build_dataset.py --out runs/dataset [--config cfg.json]
"""
import argparse
import json
import time
from pathlib import Path

from subsetuq import data
from subsetuq.harness import ExperimentConfig, build_dataset, cluster_records, dataset_hash


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", help="ExperimentConfig as JSON")
    ap.add_argument("--out", default="runs/dataset")
    args = ap.parse_args()
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    ds = build_dataset(cfg)
    print(f"{cfg.n_records} x {cfg.n_materials} simulations in {time.perf_counter() - t0:.1f}s")
    for kind, mat in ds.edp.items():
        data.write_matrix(mat, out / f"edp_{kind.value}.csv")
    data.write_features(ds.ims, out / "features_gm.csv")
    data.write_features(ds.materials, out / "features_material.csv")
    asg = cluster_records(ds, cfg)
    print(f"k = {asg.k}, cluster sizes {asg.sizes().tolist()}")
    (out / "dataset.json").write_text(json.dumps({"hash": dataset_hash(ds), "config": cfg.to_dict()}, indent=2) + "\n")
    print(f"dataset hash {dataset_hash(ds)}; files in {out}")


if __name__ == "__main__":
    main()
