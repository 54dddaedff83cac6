"""Desk-scale comparison: IBIS+SVM vs the Inception-only baseline on synthetic data.

    python scripts/compare_architectures.py --epochs 30 --out runs/compare
"""

import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from ibis.data import SynthConfig, generate_synthetic_dataset, save_dataset, split_dataset
from ibis.model import TrainConfig
from ibis.pipeline import evaluate, export_reports, fit_svms, per_class_spread, train_antennas


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="runs/compare")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = generate_synthetic_dataset(SynthConfig(windows_per_class=args.per_class, seed=args.seed))
    split_dataset(ds, seed=args.seed)
    save_dataset(ds, out / "data.ibds")

    summary = {}
    for arch in ("ibis", "inception"):
        t0 = time.perf_counter()
        logs = train_antennas(ds, out / arch / "models", arch, TrainConfig(epochs=args.epochs, seed=0))
        svm_dir = None
        if arch == "ibis":
            fit_svms(ds, out / arch / "models", out / arch / "svm")
            svm_dir = out / arch / "svm"
        reports = evaluate(ds, out / arch / "models", svm_dir)
        export_reports(reports, out / arch / "reports")
        epoch_mean = float(np.mean([r.seconds for lg in logs.values() for r in lg.records]))
        summary[arch] = {
            mode: {"accuracy": r.accuracy, "macro_f1": r.macro_f1, "spread": per_class_spread(r),
                   "per_class": r.per_class_accuracy, **({"mean_antenna": r.extra["mean_antenna_accuracy"]}
                                                         if "mean_antenna_accuracy" in r.extra else {})}
            for mode, r in reports.items()
        }
        summary[arch]["mean_epoch_seconds"] = epoch_mean
        summary[arch]["wall_seconds"] = time.perf_counter() - t0
        print(arch, json.dumps(summary[arch], indent=1))
    (out / "summary.json").write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
