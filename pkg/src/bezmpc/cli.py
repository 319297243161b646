"""Command line entry point.

Verbs::

    run <config.json> [--out PATH]
    sweep <config.json> --alphas A ... --betas B ... [--grid] [--out DIR]
    selftest [pytest args...]

Exit codes: 0 success; 1 the run ended early or hit a hard planner failure;
2 invalid configuration or usage.
"""

import argparse
import itertools
import json
import sys
from pathlib import Path

from .errors import BezmpcError
from .scenario import load_config, run_scenario, run_sweep, summary_path, sweep_table, write_csv, write_summary

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2


def _parser():
    ap = argparse.ArgumentParser(prog="bezmpc", description="Bezier-spline planner with CLF tracking")
    sub = ap.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="simulate one scenario and write CSV plus JSON summary")
    run.add_argument("config")
    run.add_argument("--out", help="CSV path; overrides the config's output field")

    sw = sub.add_parser("sweep", help="repeat a scenario over (alpha, beta) points")
    sw.add_argument("config")
    sw.add_argument("--alphas", type=float, nargs="+", required=True)
    sw.add_argument("--betas", type=float, nargs="+", required=True)
    sw.add_argument("--grid", action="store_true",
                    help="use every alpha x beta combination instead of pairing them in order")
    sw.add_argument("--out", help="directory for per-point CSVs and the sweep table")

    st = sub.add_parser("selftest", help="run the test suite")
    st.add_argument("pytest_args", nargs=argparse.REMAINDER)
    return ap


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.out:
        cfg = cfg.replace(output=args.out)
    log, summary = run_scenario(cfg)
    csv_path = write_csv(log, cfg.output)
    write_summary(summary, summary_path(csv_path))
    print(json.dumps(summary, sort_keys=True))
    failed = not summary["completed"] or (cfg.mode == "cmpc" and summary["planner_failures"] > 0)
    return EXIT_RUN_FAILED if failed else EXIT_OK


def _cmd_sweep(args):
    cfg = load_config(args.config)
    if args.grid:
        pairs = list(itertools.product(args.alphas, args.betas))
    else:
        if len(args.alphas) != len(args.betas):
            raise SystemExit("--alphas and --betas need equal lengths unless --grid is given")
        pairs = list(zip(args.alphas, args.betas))
    out_dir = Path(args.out) if args.out else Path(cfg.output).parent
    rows = run_sweep(cfg, pairs, out_dir=out_dir)
    table = sweep_table(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep_table.txt").write_text(table + "\n")
    (out_dir / "sweep.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    print(table)
    return EXIT_RUN_FAILED if any("error" in r for r in rows) else EXIT_OK


def _cmd_selftest(args):
    import pytest

    tests = Path(__file__).resolve().parents[2] / "tests"
    if not tests.is_dir():
        print(f"test directory not found at {tests}", file=sys.stderr)
        return EXIT_CONFIG
    return int(pytest.main([str(tests), "-q", *args.pytest_args]))


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.verb == "run":
            return _cmd_run(args)
        if args.verb == "sweep":
            return _cmd_sweep(args)
        return _cmd_selftest(args)
    except (BezmpcError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
