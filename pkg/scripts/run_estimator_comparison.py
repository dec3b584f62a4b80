#!/usr/bin/env python3
"""Compare optimal cost under the posterior-mode and hold-last-value receivers."""

import argparse
import pathlib
import sys

from remest.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/three_state.json")
    ap.add_argument("--out", default="results/estimator_comparison.csv")
    ap.add_argument("--fmax-grid", default="0.05:0.3:0.05")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    sys.exit(main([
        "compare-estimators", "--config", args.config, "--out", args.out,
        "--fmax-grid", args.fmax_grid,
    ]))
