#!/usr/bin/env python3
"""Cross-check exact rates of the solved policy against a seeded simulation."""

import argparse
import pathlib
import sys

from remest.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/three_state.json")
    ap.add_argument("--out", default="results/simulation_check.json")
    ap.add_argument("--horizon", default="1000000")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    sys.exit(main([
        "simulate", "--config", args.config, "--out", args.out,
        "--format", "json", "--horizon", args.horizon,
    ]))
