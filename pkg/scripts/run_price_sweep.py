#!/usr/bin/env python3
"""Sweep the transmission price and emit the (lambda, F, J, L) series."""

import argparse
import pathlib
import sys

from remest.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/three_state.json")
    ap.add_argument("--out", default="results/price_sweep.csv")
    ap.add_argument("--lambdas", default="0:20:0.5")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    sys.exit(main([
        "sweep", "--config", args.config, "--out", args.out,
        "--lambdas", args.lambdas,
    ]))
