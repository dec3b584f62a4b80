#!/usr/bin/env python3
"""Solve across a budget grid and record the optimal thresholds/mixtures."""

import argparse
import pathlib
import sys

from remest.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/symmetric_three.json")
    ap.add_argument("--out", default="results/threshold_map.csv")
    ap.add_argument("--fmax-grid", default="0.1:0.3:0.025")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    sys.exit(main([
        "thresholds", "--config", args.config, "--out", args.out,
        "--fmax-grid", args.fmax_grid,
    ]))
