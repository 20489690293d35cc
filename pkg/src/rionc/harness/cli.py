"""Command-line entry point.

Subcommands: ``run`` (one configured experiment), ``sweep`` (budget sweep
with slope fit), ``check`` (randomized property suites), ``plotdata``
(overlay CSV + SVG from run records). The environment variable
``RIONC_THREADS`` caps sweep worker parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConfigError, ResourceError
from .. import checks
from .plotdata import cmd_plotdata
from .runner import cmd_run, cmd_sweep


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rionc")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)

    p_sweep = sub.add_parser("sweep", help="sweep the round budget and fit a rate slope")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--n", required=True, help="comma-separated budgets, e.g. 1000,10000,100000")
    p_sweep.add_argument("--seeds", type=int, default=3)

    p_check = sub.add_parser("check", help="run randomized property suites")
    p_check.add_argument(
        "--suite",
        default="all",
        choices=sorted(checks.SUITES) + ["all"],
    )

    p_plot = sub.add_parser("plotdata", help="emit plot CSV and SVG from run records")
    p_plot.add_argument("csvs", nargs="+")
    p_plot.add_argument("--out", required=True)
    return parser


def _cmd_check(suite: str) -> int:
    names = sorted(checks.SUITES) if suite == "all" else [suite]
    outcomes = checks.run_suites(names)
    summary = {
        "passed": all(o.passed for o in outcomes),
        "checks": [
            {
                "suite": o.suite,
                "name": o.name,
                "passed": o.passed,
                "cases": o.cases,
                "counterexamples": o.failures,
            }
            for o in outcomes
        ],
    }
    print(json.dumps(summary, indent=2))
    return 0 if summary["passed"] else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, seed=args.seed)
        if args.command == "sweep":
            n_list = [int(v) for v in args.n.split(",") if v.strip()]
            return cmd_sweep(args.config, n_list, seeds=args.seeds)
        if args.command == "check":
            return _cmd_check(args.suite)
        if args.command == "plotdata":
            return cmd_plotdata(args.csvs, args.out)
    except (ConfigError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
