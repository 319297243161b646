"""Scenario configuration, the three-controller comparison and the gain sweep.

A scenario is one strict JSON document. Modes:

``cmpc``
    the full planner plus CLF tracker;
``clf_only``
    the CLF tracker regulating to the origin with no constraint handling;
``mpc_only``
    the same planner with its first input held over each period and no
    low-level tracker.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cmpc, ftocp
from .dynamics import DisturbanceSignal, TrajectoryLog, double_integrator, integrate_closed_loop, sincube_system
from .errors import BezmpcError, ConfigurationError, InvalidInputError
from .input_bounds import make_params
from .tracking import StatePolytope, design_law, k_clf

__all__ = [
    "ScenarioConfig",
    "load_config",
    "build_controller",
    "run_scenario",
    "run_sweep",
    "write_csv",
    "csv_header",
    "summarize",
]

SYSTEMS = {"paper_sincube": sincube_system, "double_integrator": double_integrator}
MODES = ("cmpc", "clf_only", "mpc_only")
DISTURBANCE_KINDS = ("sinusoid", "uniform", "zero")
# absolute slack on the state and input checks
STATE_TOL = 1e-6
INPUT_TOL = 1e-6


@dataclass(frozen=True)
class DisturbanceSpec:
    kind: str = "sinusoid"
    frequencies: tuple = None
    phases: tuple = None
    hold: float = 0.01


@dataclass(frozen=True)
class CostSpec:
    W_x: tuple = None
    w_u: float = 0.1
    W_f: tuple = None


@dataclass(frozen=True)
class PolytopeSpec:
    L: tuple
    ell: tuple


@dataclass(frozen=True)
class ScenarioConfig:
    system: str
    x0: tuple
    N: int
    T: float
    dt: float
    duration: float
    wbar: float
    disturbance: DisturbanceSpec
    polytope: PolytopeSpec
    u_max: float
    alpha: float
    beta: float
    poles: tuple
    mode: str
    Q: tuple = None
    cost: CostSpec = field(default_factory=CostSpec)
    seed: int = 0
    output: str = "out/run.csv"

    @property
    def periods(self):
        return int(round(self.duration / self.T))

    @property
    def steps_per_period(self):
        return int(round(self.T / self.dt))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return _to_plain(dataclasses.asdict(self))


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _strict(cls, data, where):
    if not isinstance(data, dict):
        raise InvalidInputError(f"{where}: expected a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InvalidInputError(f"{where}: unknown field(s) {', '.join(unknown)}")
    required = [f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    missing = [n for n in required if n not in data]
    if missing:
        raise InvalidInputError(f"{where}: missing field(s) {', '.join(missing)}")
    return {k: _freeze(v) for k, v in data.items()}


def config_from_dict(data):
    """Build a :class:`ScenarioConfig`, rejecting unknown fields at every level."""
    d = _strict(ScenarioConfig, data, "config")
    d["disturbance"] = DisturbanceSpec(**_strict(DisturbanceSpec, data["disturbance"], "disturbance"))
    d["polytope"] = PolytopeSpec(**_strict(PolytopeSpec, data["polytope"], "polytope"))
    if "cost" in data:
        d["cost"] = CostSpec(**_strict(CostSpec, data["cost"], "cost"))
    cfg = ScenarioConfig(**d)
    validate(cfg)
    return cfg


def load_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)


def _is_multiple(a, b):
    k = round(a / b)
    return k >= 1 and abs(k * b - a) <= 1e-9 * max(1.0, abs(a))


def validate(cfg):
    """Check every field before any simulation; raises with a descriptive message."""
    if cfg.system not in SYSTEMS:
        raise InvalidInputError(f"system must be one of {sorted(SYSTEMS)}, got {cfg.system!r}")
    if cfg.mode not in MODES:
        raise InvalidInputError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    if cfg.disturbance.kind not in DISTURBANCE_KINDS:
        raise InvalidInputError(f"disturbance kind must be one of {DISTURBANCE_KINDS}")
    n = len(cfg.x0)
    scalars = {"T": cfg.T, "dt": cfg.dt, "duration": cfg.duration, "u_max": cfg.u_max}
    for name, v in scalars.items():
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
            raise InvalidInputError(f"{name} must be a positive finite number")
    for name, v in {"wbar": cfg.wbar, "alpha": cfg.alpha, "beta": cfg.beta}.items():
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
            raise InvalidInputError(f"{name} must be a nonnegative finite number")
    if not isinstance(cfg.N, int) or cfg.N < 1:
        raise InvalidInputError("N must be a positive integer")
    if not isinstance(cfg.seed, int):
        raise InvalidInputError("seed must be an integer")
    if not _is_multiple(cfg.T, cfg.dt):
        raise ConfigurationError(f"dt={cfg.dt} does not divide T={cfg.T}")
    if not _is_multiple(cfg.duration, cfg.T):
        raise ConfigurationError(f"duration={cfg.duration} is not a multiple of T={cfg.T}")
    if cfg.system == "paper_sincube" and n != 2:
        raise InvalidInputError("paper_sincube has a 2-dimensional state")
    if len(cfg.poles) != n:
        raise InvalidInputError(f"need {n} poles for a {n}-dimensional state")
    L = np.asarray(cfg.polytope.L, dtype=float)
    if L.ndim != 2 or L.shape[1] != n or len(cfg.polytope.ell) != L.shape[0]:
        raise InvalidInputError("polytope L must be q x n with q offsets in ell")
    if cfg.Q is not None and np.asarray(cfg.Q, dtype=float).shape != (n, n):
        raise InvalidInputError(f"Q must be {n} x {n}")
    if cfg.disturbance.hold <= 0:
        raise InvalidInputError("disturbance hold must be positive")
    # design-level checks (tube fits, initial state inside, Gamma(0) <= u_max)
    build_controller(cfg)


def _system(cfg):
    if cfg.system == "double_integrator":
        return double_integrator(len(cfg.x0))
    return SYSTEMS[cfg.system]()


def build_controller(cfg):
    """Assemble system, tracking law and (for planner modes) the planner config."""
    sysm = _system(cfg)
    n = sysm.n
    law = design_law(cfg.poles, Q=None if cfg.Q is None else np.asarray(cfg.Q, dtype=float), wbar=cfg.wbar)
    poly = StatePolytope.from_rows(cfg.polytope.L, cfg.polytope.ell)
    poly.check_bounded()
    x0 = np.asarray(cfg.x0, dtype=float)
    if not poly.contains(x0):
        raise ConfigurationError("x0 lies outside the state polytope")
    disturbance = DisturbanceSignal(
        kind=cfg.disturbance.kind, wbar=float(cfg.wbar), n=n, seed=cfg.seed,
        frequencies=cfg.disturbance.frequencies, phases=cfg.disturbance.phases, hold=cfg.disturbance.hold,
    )
    out = {"system": sysm, "law": law, "polytope": poly, "disturbance": disturbance, "planner": None}
    if cfg.mode == "clf_only":
        return out
    bounds = make_params(cfg.alpha, cfg.beta, cfg.u_max, law, sysm)
    gamma0 = bounds.Gamma(np.zeros(n))
    if gamma0 > cfg.u_max:
        raise ConfigurationError(f"Gamma(0) = {gamma0:.6g} exceeds u_max = {cfg.u_max}")
    c = cfg.cost
    problem = ftocp.make_config(
        cfg.N, cfg.T, poly, law, bounds, sysm.f,
        W_x=None if c.W_x is None else np.asarray(c.W_x, dtype=float), w_u=c.w_u,
        W_f=None if c.W_f is None else np.asarray(c.W_f, dtype=float),
    )
    out["planner"] = cmpc.CmpcConfig(system=sysm, problem=problem)
    return out


class _Origin:
    """Constant reference at the origin with the spline interface."""

    def __init__(self, n):
        self.n = n

    def state(self, t):
        return np.zeros(self.n)

    def state_and_top(self, t):
        return np.zeros(self.n), 0.0


def _run_clf_only(cfg, parts):
    sysm, law, poly = parts["system"], parts["law"], parts["polytope"]
    ref = _Origin(sysm.n)

    def annotate(t, x, u):
        return {
            "xd": np.zeros(sysm.n),
            "V": float(x @ law.P @ x),
            "state_ok": bool(np.all(poly.slack(x) >= -STATE_TOL)),
            "input_ok": abs(u) <= cfg.u_max + INPUT_TOL,
        }

    _, log = integrate_closed_loop(sysm, lambda x, t: k_clf(law, sysm, ref, x, t), cfg.x0,
                                   parts["disturbance"], 0.0, cfg.periods * cfg.T, cfg.dt,
                                   log=TrajectoryLog(n=sysm.n), annotate=annotate)
    return log, None, []


def _run_planner(cfg, parts, hold):
    dev = []
    log, state = cmpc.simulate(
        parts["planner"], cfg.x0, parts["disturbance"], cfg.periods, cfg.dt, hold=hold,
        observer=lambda st, t, x, u: dev.append(abs(u - cmpc.planned_input(st, t))), state_tol=STATE_TOL, input_tol=INPUT_TOL,
    )
    return log, state, dev


def summarize(cfg, log, state, dev, parts):
    a = log.arrays()
    poly, law = parts["polytope"], parts["law"]
    x = a["x"]
    slack = np.array([poly.slack(xi) for xi in x]) if len(x) else np.zeros((0, poly.q))
    viol = np.maximum(0.0, -slack.min(axis=1)) if len(x) else np.zeros(0)
    u = a["u"]
    planner = {"planning_steps": 0, "primary_optimal": 0, "fallback_count": 0, "planner_failures": 0,
               "first_plan_max_spacing": None}
    if state is not None:
        for h in state.history:
            if "failure" in h:
                planner["planner_failures"] += 1
                continue
            planner["planning_steps"] += 1
            planner["primary_optimal"] += h["primary"] == "Optimal"
            planner["fallback_count"] += h["fallback"] is not None
        if state.first_plan is not None:
            knots = state.first_plan.knots
            planner["first_plan_max_spacing"] = float(np.max(np.linalg.norm(np.diff(knots, axis=0), axis=1)))
    level = law.level
    summary = {
        "mode": cfg.mode,
        "system": cfg.system,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "periods_requested": cfg.periods,
        "samples": len(log),
        "completed": log.aborted is None and len(log) == cfg.periods * cfg.steps_per_period,
        "aborted": log.aborted,
        "state_violations": int(np.sum(viol > STATE_TOL)),
        "max_state_violation": float(viol.max()) if viol.size else 0.0,
        "min_state_slack": float(slack.min()) if viol.size else None,
        "input_violations": int(np.sum(np.abs(u) > cfg.u_max + INPUT_TOL)),
        "max_input_excess": float(np.max(np.abs(u)) - cfg.u_max) if u.size else -cfg.u_max,
        "max_abs_u": float(np.max(np.abs(u))) if u.size else 0.0,
        "max_V_over_level": float(np.max(a["V"]) / level) if (level > 0 and u.size) else None,
        "max_u_minus_plan": float(max(dev)) if dev else None,
        **planner,
    }
    return summary


def run_scenario(cfg):
    """Run one scenario; returns ``(log, summary)``."""
    validate(cfg)
    parts = build_controller(cfg)
    if cfg.mode == "clf_only":
        log, state, dev = _run_clf_only(cfg, parts)
    else:
        log, state, dev = _run_planner(cfg, parts, hold=cfg.mode == "mpc_only")
    return log, summarize(cfg, log, state, dev, parts)


def csv_header(n):
    return (["t"] + [f"x{i + 1}" for i in range(n)] + ["u"] + [f"xd{i + 1}" for i in range(n)]
            + ["V", "state_ok", "input_ok", "planner_feasible", "fallback_used"])


def _fmt(v):
    # repr of a Python float is the shortest string that round-trips
    return repr(float(v))


def write_csv(log, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(csv_header(log.n))]
    for k in range(len(log)):
        row = [_fmt(log.t[k])] + [_fmt(v) for v in log.x[k]] + [_fmt(log.u[k])]
        row += [_fmt(v) for v in log.xd[k]] + [_fmt(log.V[k])]
        row += [str(int(b)) for b in (log.state_ok[k], log.input_ok[k], log.planner_feasible[k],
                                      log.fallback_used[k])]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


def summary_path(csv_path):
    p = Path(csv_path)
    return p.with_name(p.stem + ".summary.json")


def write_summary(summary, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return path


def run_sweep(cfg, pairs, out_dir=None):
    """Run ``cfg`` at every ``(alpha, beta)`` in ``pairs``, in order.

    A failing point is recorded with its error and the sweep continues.
    Returns the list of rows.
    """
    pairs = [(float(a), float(b)) for a, b in pairs]
    if len(pairs) < 2:
        raise InvalidInputError("a sweep needs at least two (alpha, beta) points")
    base = Path(out_dir) if out_dir is not None else Path(cfg.output).parent
    rows = []
    for k, (alpha, beta) in enumerate(pairs):
        point = cfg.replace(alpha=alpha, beta=beta,
                            output=str(base / f"sweep_{k:02d}_a{alpha:g}_b{beta:g}.csv"))
        row = {"index": k, "alpha": alpha, "beta": beta}
        try:
            log, summary = run_scenario(point)
            write_csv(log, point.output)
            row.update(summary)
            row["csv"] = point.output
        except BezmpcError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def sweep_table(rows):
    """Plain-text comparison table of sweep rows."""
    head = f"{'alpha':>7} {'beta':>7} {'max_spacing':>12} {'max|u-u*|':>10} {'x_viol':>6} {'u_viol':>6} {'fallbk':>6}"
    lines = [head]
    for r in rows:
        if "error" in r:
            lines.append(f"{r['alpha']:>7g} {r['beta']:>7g}  error: {r['error']}")
            continue
        sp = r["first_plan_max_spacing"]
        dv = r["max_u_minus_plan"]
        lines.append(
            f"{r['alpha']:>7g} {r['beta']:>7g} {sp if sp is not None else float('nan'):>12.6f} "
            f"{dv if dv is not None else float('nan'):>10.4f} {r['state_violations']:>6d} "
            f"{r['input_violations']:>6d} {r['fallback_count']:>6d}"
        )
    return "\n".join(lines)
