"""Sweep (alpha, beta) on the reference scenario and report first-plan knot spacing.

Larger gains tighten the input-bound constraint, which pulls consecutive
planned knots closer together. Prints the sweep table and the spacing
of every consecutive knot pair of each first plan.

    python3 scripts/gain_sweep.py --gains 1 4 16 --out out/sweep
"""

import argparse
import dataclasses
import json
from pathlib import Path

import numpy as np

from bezmpc import cmpc
from bezmpc.scenario import build_controller, load_config, run_sweep, sweep_table

ROOT = Path(__file__).resolve().parents[1]


def first_plan_spacings(cfg, alpha, beta):
    parts = build_controller(cfg.replace(alpha=alpha, beta=beta))
    state = cmpc.initialize(parts["planner"], np.array(cfg.x0))
    return np.linalg.norm(np.diff(state.first_plan.knots, axis=0), axis=1)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "cmpc.json"))
    ap.add_argument("--gains", type=float, nargs="+", default=[1.0, 4.0, 16.0],
                    help="values used for both alpha and beta")
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--spacings", action="store_true", help="also print per-segment knot spacing")
    args = ap.parse_args(argv)
    cfg = load_config(args.config)
    pairs = [(g, g) for g in args.gains]
    rows = run_sweep(cfg, pairs, out_dir=args.out)
    print(sweep_table(rows))
    Path(args.out, "sweep.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    if args.spacings:
        for a, b in pairs:
            sp = first_plan_spacings(cfg, a, b)
            print(f"({a:g},{b:g}) " + " ".join(f"{v:.3f}" for v in sp))


if __name__ == "__main__":
    main()
