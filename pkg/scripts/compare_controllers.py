"""Three-controller comparison on the reference scenario.

Runs the cmpc, clf_only and mpc_only configs (same initial state and
disturbance), writes each trace and summary under ``--out`` and prints a
violation table.

    python3 scripts/compare_controllers.py --out out/compare
"""

import argparse
import json
from pathlib import Path

from bezmpc.scenario import load_config, run_scenario, summary_path, write_csv, write_summary

ROOT = Path(__file__).resolve().parents[1]
MODES = ("cmpc", "clf_only", "mpc_only")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", default=str(ROOT / "configs"))
    ap.add_argument("--out", default="out/compare")
    args = ap.parse_args(argv)
    out = Path(args.out)
    rows = []
    for mode in MODES:
        cfg = load_config(Path(args.configs) / f"{mode}.json")
        log, summary = run_scenario(cfg)
        csv_path = write_csv(log, out / f"{mode}.csv")
        write_summary(summary, summary_path(csv_path))
        rows.append(summary)
    print(f"{'mode':>9} {'samples':>7} {'x_viol':>6} {'max_x_viol':>10} {'u_viol':>6} {'max|u|':>8} "
          f"{'fallbk':>6} {'fail':>4}  ended")
    for s in rows:
        ended = "completed" if s["completed"] else f"aborted ({s['aborted']})" if s["aborted"] else "incomplete"
        print(f"{s['mode']:>9} {s['samples']:>7d} {s['state_violations']:>6d} {s['max_state_violation']:>10.4g} "
              f"{s['input_violations']:>6d} {s['max_abs_u']:>8.3g} {s['fallback_count']:>6d} "
              f"{s['planner_failures']:>4d}  {ended}")
    (out / "comparison.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
