#!/usr/bin/env python3
"""Train the default toy hyperparameter grid and plot rho-vs-epoch evolution.

Reproduces the correlation-evolution experiment end to end: 60 models x 30
epochs of weight snapshots, then grouped Spearman correlations of all four
quality metrics against test accuracy and generalization gap, with CSV and
SVG artifacts under the output directory.
"""

import argparse
import csv
import sys
from pathlib import Path

from genprobe.cli import main as genprobe_main
from genprobe.families import grid_family


def run(out_dir: Path, epochs: int, lrf: bool) -> int:
    grid_dir = out_dir / "grid"
    rep_dir = out_dir / "report"
    print(f"training default grid into {grid_dir} ...")
    manifest = grid_family(out_dir=grid_dir, epochs=epochs)
    args = ["evaluate", "--manifest", str(manifest), "--group-by", "epoch", "--out", str(rep_dir)]
    if lrf:
        args.append("--lrf")
    rc = genprobe_main(args)
    if rc != 0:
        return rc

    with open(rep_dir / "correlations.csv") as fh:
        rows = list(csv.DictReader(fh))
    epochs_seen = sorted({int(r["epoch"]) for r in rows})
    probe_epochs = [e for e in epochs_seen if e in (1, 5, 10, 20, epochs_seen[-1])]
    print(f"\nrho(metric, target) at epochs {probe_epochs}:")
    for metric in sorted({r["metric_id"] for r in rows}):
        for target in ("test_accuracy", "generalization_gap"):
            by_ep = {int(r["epoch"]): float(r["rho"]) for r in rows
                     if r["metric_id"] == metric and r["target"] == target}
            values = " ".join(f"{by_ep[e]:+.3f}" for e in probe_epochs if e in by_ep)
            print(f"  {metric:10s} vs {target:19s}: {values}")
    print(f"\nartifacts: {rep_dir}/correlations.csv, evolution_*.svg, scatter_*.svg")
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/toy-grid", type=Path)
    parser.add_argument("--epochs", default=30, type=int)
    parser.add_argument("--lrf", action="store_true")
    opts = parser.parse_args()
    sys.exit(run(opts.out, opts.epochs, opts.lrf))
