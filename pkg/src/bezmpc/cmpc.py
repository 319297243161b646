"""Multi-rate planning loop: a cone-program planner at period ``T`` feeding a
continuous CLF tracker.

At every grid time ``iT`` the planner re-linearizes about warm-start anchors
and solves the planning problem. If that fails it retries with the previous
step's linearizations shifted by one plus the linearization at the origin,
for which the shifted previous plan is a feasible point. Between grid times
the tracker follows a frozen spline.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ftocp
from .conic import Status, Tolerances, solve
from .dynamics import TrajectoryLog, integrate_closed_loop, linearize_discretize
from .errors import ConfigurationError, PlannerFailure, PreconditionError, StaleSplineError
from .tracking import k_clf, lyapunov_value

__all__ = ["CmpcConfig", "PlannerState", "initialize", "plan_step", "control", "planned_input", "simulate"]

_GRID_TOL = 1e-9


@dataclass(frozen=True)
class CmpcConfig:
    system: object
    problem: ftocp.FtocpConfig
    max_iter: int = 50_000
    tol: Tolerances = field(default_factory=Tolerances)
    # cold starts converged faster than unshifted or shifted primal warm starts
    warm_start: bool = False
    # swapped out in tests to inject solver failures
    solver: Callable = solve


@dataclass
class PlannerState:
    config: CmpcConfig
    i: int
    anchors: np.ndarray  # (N, n)
    ubar: np.ndarray  # (N,)
    lins: list  # linearizations actually used by the accepted plan
    used_anchors: np.ndarray
    lin_origin: object
    spline: object = None
    solution: Optional[ftocp.FtocpSolution] = None
    fallback_used: bool = False
    result: object = None  # last accepted SolveResult, used as warm start
    first_plan: Optional[ftocp.FtocpSolution] = None
    history: list = field(default_factory=list)

    @property
    def t_plan(self):
        return self.i * self.config.problem.T


def _attempt(config, x_meas, anchors, lins, warm):
    prog = ftocp.build(config.problem, x_meas, anchors, lins)
    warm = warm if config.warm_start else None
    return config.solver(prog, tol=config.tol, max_iter=config.max_iter, warm_start=warm)


def _accept(state, res, anchors, lins, fallback):
    cfg = state.config.problem
    sol = ftocp.extract(res, cfg)
    state.solution = sol
    state.result = res
    state.used_anchors = np.array(anchors, dtype=float)
    state.lins = list(lins)
    state.fallback_used = fallback
    state.spline = sol.spline(cfg.T, t_start=state.i * cfg.T)
    # shift warm starts: anchors <- x*_1..x*_N, ubar <- u*_1..u*_{N-1}, 0
    state.anchors = sol.knots[1:].copy()
    state.ubar = np.r_[sol.inputs[1:], 0.0]
    return state


def initialize(config, x0):
    """Solve the first planning problem from straight-line anchors ``x0 -> 0``."""
    cfg = config.problem
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != cfg.n or not np.all(np.isfinite(x0)):
        raise PreconditionError("x0 must be a finite state vector")
    if not cfg.polytope.contains(x0):
        raise PreconditionError("x0 lies outside the state polytope")
    sysm = config.system
    N, T = cfg.N, cfg.T
    anchors = np.linspace(x0, np.zeros(cfg.n), N + 1)[:N]
    ubar = np.zeros(N)
    lin_o = linearize_discretize(sysm, np.zeros(cfg.n), 0.0, T)
    lins = [linearize_discretize(sysm, a, u, T) for a, u in zip(anchors, ubar)]
    res = _attempt(config, x0, anchors, lins, None)
    state = PlannerState(config=config, i=0, anchors=anchors, ubar=ubar, lins=lins,
                         used_anchors=anchors, lin_origin=lin_o)
    state.history.append({"i": 0, "primary": res.status.value, "fallback": None})
    if res.status is not Status.OPTIMAL:
        raise ConfigurationError(
            f"first planning problem is {res.status.value}: no feasible initial plan from x0 "
            "(the initial-feasibility assumption does not hold for this configuration)"
        )
    _accept(state, res, anchors, lins, False)
    state.first_plan = state.solution
    return state


def plan_step(state, x_measured, t):
    """Advance the planner to grid time ``t = (i+1) T``; mutates and returns ``state``."""
    config = state.config
    cfg = config.problem
    i_next = state.i + 1
    if abs(t - i_next * cfg.T) > _GRID_TOL * max(1.0, abs(t)):
        raise PreconditionError(f"plan_step called at t={t}, expected grid time {i_next * cfg.T}")
    sysm = config.system
    x_measured = np.asarray(x_measured, dtype=float).reshape(-1)
    prev_anchors, prev_lins = state.used_anchors, state.lins
    state.i = i_next

    anchors = state.anchors
    lins = [linearize_discretize(sysm, a, u, cfg.T) for a, u in zip(anchors, state.ubar)]
    res = _attempt(config, x_measured, anchors, lins, state.result)
    record = {"i": i_next, "primary": res.status.value, "fallback": None}
    state.history.append(record)
    if res.status is Status.OPTIMAL:
        return _accept(state, res, anchors, lins, False)

    fb_anchors = np.vstack([prev_anchors[1:], np.zeros((1, cfg.n))])
    fb_lins = list(prev_lins[1:]) + [state.lin_origin]
    res_fb = _attempt(config, x_measured, fb_anchors, fb_lins, state.result)
    record["fallback"] = res_fb.status.value
    if res_fb.status is Status.OPTIMAL:
        return _accept(state, res_fb, fb_anchors, fb_lins, True)
    raise PlannerFailure(
        f"planning step {i_next} at t={t}: primary {res.status.value}, fallback {res_fb.status.value}",
        diagnostics={
            "i": i_next, "t": t, "x": x_measured.tolist(),
            "primary": {"status": res.status.value, "r_prim": res.r_prim, "r_dual": res.r_dual,
                        "iterations": res.iterations},
            "fallback": {"status": res_fb.status.value, "r_prim": res_fb.r_prim,
                         "r_dual": res_fb.r_dual, "iterations": res_fb.iterations},
        },
    )


def control(state, x, t):
    """CLF tracking input against the current frozen spline."""
    T = state.config.problem.T
    t0 = state.t_plan
    if t < t0 - _GRID_TOL or t > t0 + T + _GRID_TOL:
        raise StaleSplineError(f"t={t} outside the served interval [{t0}, {t0 + T}]")
    return k_clf(state.config.problem.law, state.config.system, state.spline, x, t)


def planned_input(state, t):
    """Planned input ``u*_j`` of the last accepted plan for the period containing ``t``."""
    T = state.config.problem.T
    t0 = state.spline.t_start
    j = int(np.floor((t - t0) / T + _GRID_TOL))
    inputs = state.solution.inputs
    return float(inputs[j]) if 0 <= j < inputs.size else 0.0


def _reference(state, t):
    spline = state.spline
    if t > spline.t_end + _GRID_TOL:
        return np.zeros(spline.n)  # stale plan past its horizon rests at the origin
    return spline.state(t)


def simulate(config, x0, disturbance, periods, dt, hold=False, observer=None,
             state_tol=1e-6, input_tol=1e-6):
    """Closed-loop run over ``periods`` planning periods.

    With ``hold=False`` the CLF tracker follows each plan and a hard planner
    failure ends the run with ``log.aborted`` set. With ``hold=True`` the
    planned first input is applied as a zero-order hold with no tracker, and
    a failed planning step keeps executing the previous plan (flagged as
    infeasible in the log). ``observer(state, t, x, u)`` is called at every
    logged sample with the live planner state. Returns ``(log, state)``.
    """
    cfg = config.problem
    sysm = config.system
    state = initialize(config, x0)
    log = TrajectoryLog(n=cfg.n)
    u_max = cfg.bounds.u_max
    P = cfg.law.P
    feasible = [True]

    def annotate(t, x, u):
        xd = _reference(state, t)
        e = x - xd
        if observer is not None:
            observer(state, t, x, u)
        return {
            "xd": xd,
            "V": float(e @ P @ e),
            "state_ok": bool(np.all(cfg.polytope.slack(x) >= -state_tol)),
            "input_ok": abs(u) <= u_max + input_tol,
            "planner_feasible": feasible[0],
            "fallback_used": state.fallback_used,
        }

    x = np.asarray(x0, dtype=float)
    for i in range(periods):
        t0 = i * cfg.T
        if i > 0 and hold and not cfg.polytope.contains(x):
            # the planning problem presumes x in X; keep executing the stale plan
            state.i += 1
            state.history.append({"i": i, "failure": f"state outside the polytope at t={t0}; planner skipped"})
            feasible[0] = False
        elif i > 0:
            try:
                plan_step(state, x, t0)
                feasible[0] = True
            except PlannerFailure as exc:
                state.history.append({"i": i, "failure": str(exc), "diagnostics": exc.diagnostics})
                if not hold:
                    log.aborted = str(exc)
                    break
                feasible[0] = False
        if hold:
            u_hold = planned_input(state, t0)
            controller = lambda xs, ts: u_hold  # noqa: E731
        else:
            controller = lambda xs, ts: control(state, xs, ts)  # noqa: E731
        x, log = integrate_closed_loop(sysm, controller, x, disturbance, t0, t0 + cfg.T, dt,
                                       log=log, annotate=annotate)
        if log.aborted:
            break
    return log, state
