"""Command-line front end.

``lais run`` executes a configured experiment and writes CSV or JSON
results; ``lais verify-budget`` runs one repetition and checks the
evaluation ledger against the closed-form counts; ``lais list-targets``
prints the built-in target registry.

Exit codes: 0 success, 2 configuration error, 3 budget mismatch,
4 degenerate weights.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import parse_config
from .errors import BudgetMismatchError, ConfigError, DegenerateWeightsError
from .harness import TARGET_NAMES, emit, run_experiment, verify_budget

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_DEGENERATE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lais",
        description="Layered adaptive importance sampling experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", help="path to a TOML experiment file")
    run_p.add_argument("--out", default=".", help="output directory")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override [run].master_seed")
    run_p.add_argument("--runs", type=int, default=None,
                       help="override [run].n_runs")
    run_p.add_argument("--threads", type=int, default=None,
                       help="override [run].threads")

    vb_p = sub.add_parser("verify-budget",
                          help="check evaluation counts for one run")
    vb_p.add_argument("config", help="path to a TOML experiment file")

    sub.add_parser("list-targets", help="print the built-in targets")
    return parser


def _cmd_run(args) -> int:
    config = parse_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.runs is not None:
        overrides["n_runs"] = args.runs
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        config = dataclasses.replace(
            config, run=dataclasses.replace(config.run, **overrides)
        )
        config.validate()
    result = run_experiment(config)
    path = emit(result, args.out, args.format)
    agg = result.aggregate
    print(f"{result.label}: {agg['n_runs']} runs -> {path}")
    print(f"  mean log Z_hat = {agg['mean_log_z_hat']:.6f}")
    if "mse_i_hat" in agg:
        print(f"  MSE(I_hat)     = {agg['mse_i_hat']:.6g}")
    print(f"  mean ESS       = {agg['mean_ess']:.1f}")
    if agg["n_degenerate"]:
        print(f"  degenerate weight sets in {agg['n_degenerate']} run(s)",
              file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def _cmd_verify_budget(args) -> int:
    config = parse_config(args.config)
    report = verify_budget(config)
    print("budget check: ok")
    for key in ("full_posterior_evals", "partial_posterior_evals_total",
                "gradient_evals", "posterior_total"):
        print(f"  {key}: expected {report['expected'][key]}, "
              f"observed {report['observed'][key]}")
    return EXIT_OK


def _cmd_list_targets(args) -> int:
    width = max(len(name) for name in TARGET_NAMES)
    for name, summary in TARGET_NAMES.items():
        print(f"{name:<{width}}  {summary}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "verify-budget": _cmd_verify_budget,
        "list-targets": _cmd_list_targets,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetMismatchError as exc:
        print(f"budget mismatch: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except DegenerateWeightsError as exc:
        print(f"degenerate weights: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
