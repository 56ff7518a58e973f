#!/usr/bin/env python3
"""Plot per-stage loss curves from a `wtrk run` output directory."""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_curves(path):
    curves = defaultdict(list)
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            curves[row["stage"]].append((int(row["iteration"]), float(row["loss"])))
    return curves


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("-o", "--output", type=Path, help="image path (default: <run_dir>/losses.png)")
    args = ap.parse_args()

    curves = read_curves(args.run_dir / "losses.csv")
    if not curves:
        raise SystemExit("losses.csv has no rows")
    fig, axes = plt.subplots(1, len(curves), figsize=(4 * len(curves), 3), squeeze=False)
    for ax, (stage, pts) in zip(axes[0], sorted(curves.items())):
        it, loss = zip(*pts)
        ax.semilogy(it, [max(v, 1e-300) for v in loss])
        ax.set_title(stage)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
    fig.tight_layout()
    out = args.output or args.run_dir / "losses.png"
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
