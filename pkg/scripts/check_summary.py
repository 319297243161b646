"""Recompute the violation metrics of a run from its CSV and compare with the summary.

Reads only the CSV, the JSON config and the summary file; none of the
simulation code is imported, so the check is independent of it.

    python3 scripts/check_summary.py configs/cmpc.json out/cmpc.csv
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

STATE_TOL = 1e-6
INPUT_TOL = 1e-6
CHECKED = ("samples", "state_violations", "max_state_violation", "min_state_slack",
           "input_violations", "max_input_excess", "max_abs_u")


def recompute(config_path, csv_path):
    cfg = json.loads(Path(config_path).read_text())
    n = len(cfg["x0"])
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {name: i for i, name in enumerate(header)}
    x = np.array([[float(r[cols[f"x{i + 1}"]]) for i in range(n)] for r in body]).reshape(-1, n)
    u = np.array([float(r[cols["u"]]) for r in body])
    L = np.atleast_2d(np.asarray(cfg["polytope"]["L"], dtype=float))
    ell = np.asarray(cfg["polytope"]["ell"], dtype=float)
    norms = np.linalg.norm(L, axis=1)
    L, ell = L / norms[:, None], ell / norms
    slack = np.array([ell - L @ xi for xi in x]).reshape(-1, ell.size)
    viol = np.maximum(0.0, -slack.min(axis=1)) if len(x) else np.zeros(0)
    u_max = cfg["u_max"]
    return {
        "samples": len(body),
        "state_violations": int(np.sum(viol > STATE_TOL)),
        "max_state_violation": float(viol.max()) if viol.size else 0.0,
        "min_state_slack": float(slack.min()) if viol.size else None,
        "input_violations": int(np.sum(np.abs(u) > u_max + INPUT_TOL)),
        "max_input_excess": float(np.max(np.abs(u)) - u_max) if u.size else -u_max,
        "max_abs_u": float(np.max(np.abs(u))) if u.size else 0.0,
    }


def compare(config_path, csv_path, summary_path=None):
    """Return the list of ``(key, recomputed, reported)`` mismatches."""
    csv_path = Path(csv_path)
    summary_path = Path(summary_path or csv_path.with_name(csv_path.stem + ".summary.json"))
    reported = json.loads(summary_path.read_text())
    ours = recompute(config_path, csv_path)
    return [(k, ours[k], reported[k]) for k in CHECKED if ours[k] != reported[k]]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("csv")
    ap.add_argument("--summary")
    args = ap.parse_args(argv)
    bad = compare(args.config, args.csv, args.summary)
    for key, ours, theirs in bad:
        print(f"MISMATCH {key}: csv gives {ours!r}, summary says {theirs!r}")
    if not bad:
        print("summary metrics agree exactly with the CSV")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
