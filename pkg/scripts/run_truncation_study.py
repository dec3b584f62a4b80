#!/usr/bin/env python3
"""Quantify the information loss of smaller age truncations."""

import argparse
import pathlib
import sys

from remest.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/three_state.json")
    ap.add_argument("--out", default="results/truncation_study.csv")
    ap.add_argument("--theta-grid", default="1,20")
    ap.add_argument("--delta-grid", default="5:20:5")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    sys.exit(main([
        "truncation", "--config", args.config, "--out", args.out,
        "--theta-grid", args.theta_grid, "--delta-grid", args.delta_grid,
    ]))
