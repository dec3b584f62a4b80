"""Experiment CLI: config in, machine-readable result files out.

Subcommand-first syntax; every command takes --config and writes CSV or
JSON via --out/--format.  Exit codes: 0 success, 2 config/validation error,
3 solver non-convergence.  Errors are emitted as a single JSON object on
stderr so callers can parse failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from . import __version__
from .config import SystemConfig
from .constrained import bisection_solve, solve_cmdp
from .errors import (
    ConfigError,
    ConvergenceFailure,
    NonConvergenceError,
    RemestError,
    ValidationError,
)
from .estimator import steady_state_age
from .evaluation import kl_truncation, simulate, stationary_metrics, sweep_lambda
from .model import check_assumption1
from .solver import (
    check_submodularity,
    check_switching_structure,
    check_value_monotonicity,
    rvi_solve,
    spi_solve,
)
from .markov import matrix_power, symmetric_power_closed_form

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fmt(value) -> str:
    """Fixed 12-significant-digit decimal rendering for CSV cells."""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def emit_results(records: list, fmt: str, path: str, columns: list | None = None,
                 meta: dict | None = None) -> None:
    """Write result rows to CSV (fixed column order, 12 significant digits)
    or JSON (stable key order, full-precision floats)."""
    if not records:
        raise ValueError("no records to emit")
    if columns is None:
        columns = list(records[0].keys())
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_fmt(rec.get(c, "")) for c in columns])
        payload = buf.getvalue()
    elif fmt == "json":
        doc = {
            "meta": dict(sorted((meta or {}).items())),
            "columns": columns,
            "records": [{c: rec.get(c) for c in columns} for rec in records],
        }
        payload = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        if path == "-":
            sys.stdout.write(payload)
        else:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(payload)
    except OSError as exc:
        raise RemestError(f"cannot write {path}: {exc}") from exc


def _meta(config: SystemConfig, experiment: str) -> dict:
    return {
        "experiment": experiment,
        "config_digest": config.digest(),
        "library_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def _parse_grid(spec: str) -> list:
    """Grid syntax: 'start:stop:step' or comma-separated values."""
    if ":" in spec:
        start, stop, step = (float(x) for x in spec.split(":"))
        if step <= 0:
            raise ConfigError("grid step must be positive")
        n = int(round((stop - start) / step))
        return [round(start + i * step, 12) for i in range(n + 1)]
    return [float(x) for x in spec.split(",") if x.strip()]


def cmd_check(config: SystemConfig, args) -> tuple:
    model = config.build_model()
    report = check_assumption1(model)
    nu = model.chain.stationary()
    rows = [
        {
            "config_digest": config.digest(),
            "states": model.num_mdp_states,
            "assumption_holds": report.holds,
            "limit_ratio": report.limit_ratio,
            "tightest_bound": float(report.bound_per_state.min()),
            "stationary": " ".join(f"{v:.12g}" for v in nu.probs),
            "steady_ages": " ".join(
                str(steady_state_age(model.chain, z, model.theta_max))
                for z in range(model.n_states)
            ),
        }
    ]
    cols = list(rows[0].keys())
    return rows, cols, "check"


def cmd_solve(config: SystemConfig, args) -> tuple:
    model = config.build_model()
    sol = solve_cmdp(
        model, config.f_max, config.lambda_max, config.tolerances.mixture
    )
    rows = [
        {
            "config_digest": config.digest(),
            "f_max": config.f_max,
            "kind": sol.kind,
            "lambda_star": sol.lam_star,
            "p": sol.policy.p if sol.is_mixture else 1.0,
            "F": sol.F,
            "J": sol.J,
            "search_iterations": sol.trace.iterations,
            "differing_states": len(sol.policy.differing_states) if sol.is_mixture else 0,
        }
    ]
    return rows, list(rows[0].keys()), "solve"


def cmd_solve_lambda(config: SystemConfig, args) -> tuple:
    model = config.build_model()
    lam = float(args.lam)
    policy, gb, view = spi_solve(model, lam)
    met = stationary_metrics(model, policy)
    rows = [
        {
            "config_digest": config.digest(),
            "lambda": lam,
            "F": met.F,
            "J": met.J,
            "L": met.J + lam * met.F,
            "gain": gb.gain,
            "thresholds_digest": _thresholds_digest(view),
            "distinct_thresholds": len(view.distinct()),
        }
    ]
    return rows, list(rows[0].keys()), "solve-lambda"


def _thresholds_digest(view) -> str:
    import hashlib

    items = sorted((k, str(v)) for k, v in view.thresholds.items())
    return hashlib.sha256(repr(items).encode()).hexdigest()[:12]


def cmd_sweep(config: SystemConfig, args) -> tuple:
    model = config.build_model()
    grid = _parse_grid(args.lambdas)
    outcomes = sweep_lambda(model, grid)
    digest = config.digest()
    rows = []
    for o in outcomes:
        rows.append(
            {
                "lambda": o.lam,
                "F": o.F,
                "J": o.J,
                "L": o.L,
                "thresholds_digest": _thresholds_digest(o.view) if o.view else "",
                "config_digest": digest,
            }
        )
    return rows, ["lambda", "F", "J", "L", "thresholds_digest", "config_digest"], "sweep"


def cmd_thresholds(config: SystemConfig, args) -> tuple:
    model = config.build_model()
    digest = config.digest()
    rows = []
    for f_max in _parse_grid(args.fmax_grid):
        sol = solve_cmdp(model, f_max, config.lambda_max, config.tolerances.mixture)
        if sol.is_mixture:
            thr_minus = _single_threshold(sol.view_minus)
            thr_plus = _single_threshold(sol.view_plus)
            p = sol.policy.p
        else:
            thr_minus = ""
            thr_plus = _single_threshold(sol.view_plus)
            p = 1.0
        rows.append(
            {
                "f_max": f_max,
                "j_star": sol.J,
                "lambda_star": sol.lam_star,
                "p": p,
                "kind": sol.kind,
                "threshold_minus": thr_minus,
                "threshold_plus": thr_plus,
                "config_digest": digest,
            }
        )
    cols = ["f_max", "j_star", "lambda_star", "p", "kind",
            "threshold_minus", "threshold_plus", "config_digest"]
    return rows, cols, "thresholds"


def _single_threshold(view) -> str:
    if view is None:
        return ""
    distinct = view.distinct()
    if len(distinct) == 1:
        return str(distinct[0])
    return f"{len(distinct)} distinct"


def cmd_truncation(config: SystemConfig, args) -> tuple:
    digest = config.digest()
    theta_ref = config.theta_max
    delta_ref = config.delta_max
    rows = []
    for theta_small in (int(v) for v in _parse_grid(args.theta_grid)):
        for delta_small in (int(v) for v in _parse_grid(args.delta_grid)):
            kl = kl_truncation(
                config, theta_ref, delta_ref, theta_small, delta_small,
                infinite_on_mismatch=True,
            )
            rows.append(
                {
                    "theta_max": theta_small,
                    "delta_max": delta_small,
                    "kl": kl,
                    "config_digest": digest,
                }
            )
    return rows, ["theta_max", "delta_max", "kl", "config_digest"], "truncation"


def cmd_compare_estimators(config: SystemConfig, args) -> tuple:
    digest = config.digest()
    rows = []
    cfg_map = config
    cfg_zoh = config.with_overrides(theta_max=1, estimator="zoh")
    model_map = cfg_map.build_model()
    model_zoh = cfg_zoh.build_model()
    for f_max in _parse_grid(args.fmax_grid):
        sol_map = solve_cmdp(model_map, f_max, config.lambda_max, config.tolerances.mixture)
        sol_zoh = solve_cmdp(model_zoh, f_max, config.lambda_max, config.tolerances.mixture)
        rows.append(
            {
                "f_max": f_max,
                "j_map": sol_map.J,
                "j_zoh": sol_zoh.J,
                "lambda_map": sol_map.lam_star,
                "lambda_zoh": sol_zoh.lam_star,
                "kind_map": sol_map.kind,
                "kind_zoh": sol_zoh.kind,
                "config_digest": digest,
            }
        )
    cols = ["f_max", "j_map", "j_zoh", "lambda_map", "lambda_zoh",
            "kind_map", "kind_zoh", "config_digest"]
    return rows, cols, "compare-estimators"


def cmd_simulate(config: SystemConfig, args) -> tuple:
    model = config.build_model()
    sol = solve_cmdp(model, config.f_max, config.lambda_max, config.tolerances.mixture)
    met = stationary_metrics(model, sol.policy)
    report = simulate(model, sol.policy, int(args.horizon), config.seed)
    row = {"config_digest": config.digest(), "kind": sol.kind,
           "stationary_F": met.F, "stationary_J": met.J}
    row.update(report.as_dict())
    return [row], list(row.keys()), "simulate"


def cmd_selftest(config: SystemConfig, args) -> tuple:
    model = config.build_model()
    digest = config.digest()
    checks = []

    def record(name, passed, detail=""):
        checks.append({"check": name, "passed": bool(passed), "detail": detail,
                       "config_digest": digest})
        print(f"[{'PASS' if passed else 'FAIL'}] {name} {detail}")

    # Chain algebra: closed form vs repeated powers on the symmetric family.
    worst = 0.0
    for n_states in (2, 3, 5):
        for frac in (0.5, 1.0):
            sigma = frac / n_states
            from .markov import symmetric_chain

            chain = symmetric_chain(n_states, sigma)
            for n in (0, 1, 5, 20):
                diff = np.abs(
                    symmetric_power_closed_form(n_states, sigma, n)
                    - matrix_power(chain, n)
                ).max()
                worst = max(worst, diff)
    record("closed-form-vs-power", worst <= 1e-12, f"max|diff|={worst:.2e}")

    # Estimate table sanity: age-zero column is the content itself.
    record(
        "estimate-table-age-zero",
        bool((model.estimates.table[:, 0] == np.arange(model.n_states)).all()),
    )

    # Transition fans sum to one.
    from .model import transition

    rng = np.random.default_rng(0)
    fan_ok = True
    for idx in rng.integers(0, model.num_mdp_states, size=50):
        for u in (0, 1):
            fan = transition(model, model.decode(int(idx)), u)
            fan_ok &= abs(sum(p for _, p in fan.pairs) - 1.0) < 1e-12
    record("transition-fans-sum-to-one", fan_ok)

    # Solver structure at two prices.
    for lam in (2.0, 5.0):
        policy, gb, view = spi_solve(model, lam)
        violations = check_switching_structure(policy, model)
        record(f"switching-structure@lam={lam}", not violations,
               f"{len(violations)} violations")
        mono = check_value_monotonicity(gb, model)
        record(f"value-monotonicity@lam={lam}", mono <= 1e-8, f"max drop={mono:.2e}")
        sub = check_submodularity(model, gb)
        record(f"submodularity@lam={lam}", sub <= 1e-8, f"max={sub:.2e}")

    # Structured vs unstructured solver agreement.
    lam = 5.0
    _, gb_s, _ = spi_solve(model, lam)
    _, gb_r = rvi_solve(model, lam)
    gap = abs(gb_s.gain - gb_r.gain)
    record("spi-vs-rvi-gain@lam=5", gap <= 1e-6, f"gap={gap:.2e}")

    n_fail = sum(1 for c in checks if not c["passed"])
    print(f"selftest: {len(checks) - n_fail}/{len(checks)} checks passed")
    return checks, ["check", "passed", "detail", "config_digest"], "selftest"


def cmd_bisect(config: SystemConfig, args) -> tuple:
    model = config.build_model()
    lam_star, trace = bisection_solve(
        model, config.f_max, config.lambda_max, config.tolerances.search
    )
    rows = [
        {
            "config_digest": config.digest(),
            "f_max": config.f_max,
            "lambda_star": lam_star,
            "iterations": trace.iterations,
        }
    ]
    return rows, list(rows[0].keys()), "bisect"


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "solve-lambda": cmd_solve_lambda,
    "sweep": cmd_sweep,
    "thresholds": cmd_thresholds,
    "truncation": cmd_truncation,
    "compare-estimators": cmd_compare_estimators,
    "simulate": cmd_simulate,
    "selftest": cmd_selftest,
    "bisect": cmd_bisect,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="remest",
        description="Budget-constrained transmission scheduling for remote "
        "estimation of Markov sources",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--out", default="-", help="output path ('-' for stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--fmax", type=float, default=None, help="override config f_max")

    common(sub.add_parser("check", help="validate the config and report feasibility"))
    common(sub.add_parser("solve", help="solve the budget-constrained problem"))
    p = sub.add_parser("solve-lambda", help="solve the relaxed problem at one price")
    common(p)
    p.add_argument("--lam", type=float, required=True)
    p = sub.add_parser("sweep", help="price sweep: (lambda, F, J, L) series")
    common(p)
    p.add_argument("--lambdas", default="0:20:0.5", help="grid 'a:b:step' or comma list")
    p = sub.add_parser("thresholds", help="solutions across a budget grid")
    common(p)
    p.add_argument("--fmax-grid", default="0.05:0.3:0.05")
    p = sub.add_parser("truncation", help="information loss of smaller truncations")
    common(p)
    p.add_argument("--theta-grid", default="20")
    p.add_argument("--delta-grid", default="5:20:5")
    p = sub.add_parser("compare-estimators", help="posterior-mode vs hold-last-value")
    common(p)
    p.add_argument("--fmax-grid", default="0.05:0.3:0.05")
    p = sub.add_parser("simulate", help="solve, then run the seeded simulator")
    common(p)
    p.add_argument("--horizon", type=int, default=10**6)
    common(sub.add_parser("selftest", help="run structural conformance checks"))
    common(sub.add_parser("bisect", help="baseline bisection on the budget"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = SystemConfig.from_file(args.config)
        if args.seed is not None:
            config = config.with_overrides(seed=args.seed)
        if args.fmax is not None:
            config = config.with_overrides(f_max=args.fmax)
        rows, columns, experiment = COMMANDS[args.command](config, args)
        meta = _meta(config, experiment)
        emit_results(rows, args.format, args.out, columns=columns, meta=meta)
        if args.command == "selftest" and any(not r["passed"] for r in rows):
            return 1
        return EXIT_OK
    except (ConfigError, ValidationError) as exc:
        _emit_error(exc)
        return EXIT_CONFIG
    except (ConvergenceFailure, NonConvergenceError) as exc:
        _emit_error(exc)
        return EXIT_SOLVER
    except RemestError as exc:
        _emit_error(exc)
        return 1


def _emit_error(exc: Exception) -> None:
    sys.stderr.write(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
    )


if __name__ == "__main__":
    sys.exit(main())
