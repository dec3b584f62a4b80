#!/usr/bin/env python3
"""Iteration counts of the two multiplier searches across tolerances."""

import argparse
import pathlib

import numpy as np

from remest import SystemConfig, bisection_solve, solve_cmdp
from remest.cli import emit_results

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/three_state.json")
    ap.add_argument("--out", default="results/search_complexity.csv")
    args = ap.parse_args()
    pathlib.Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    config = SystemConfig.from_file(args.config)
    model = config.build_model()
    rows = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        sol = solve_cmdp(model, config.f_max, config.lambda_max, eps)
        _, trace = bisection_solve(model, config.f_max, config.lambda_max, eps)
        rows.append({
            "epsilon": eps,
            "intersection_iterations": sol.trace.iterations,
            "bisection_iterations": trace.iterations,
            "bisection_bound": int(np.ceil(np.log2(config.lambda_max / eps))),
            "config_digest": config.digest(),
        })
    emit_results(rows, "csv", args.out)
    print(f"wrote {args.out}")
