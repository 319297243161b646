import dataclasses

import numpy as np
import pytest

from bezmpc import cmpc, ftocp
from bezmpc.conic import Status, solve
from bezmpc.dynamics import DisturbanceSignal, sincube_system
from bezmpc.errors import ConfigurationError, PlannerFailure, PreconditionError, StaleSplineError
from bezmpc.input_bounds import make_params
from bezmpc.tracking import box_polytope, design_law, k_clf, k_ff

SYS = sincube_system()


def make_config(N=10, T=0.3, wbar=0.01, solver=solve):
    law = design_law([-2.0, -2.0], wbar=wbar)
    bounds = make_params(4.0, 4.0, 100.0, law, SYS)
    prob = ftocp.make_config(N, T, box_polytope([2.0, 1.0]), law, bounds, SYS.f)
    return cmpc.CmpcConfig(system=SYS, problem=prob, solver=solver)


class FailingSolver:
    """Wraps ``solve`` and forces an IterationLimit on chosen call numbers."""

    def __init__(self, fail_calls):
        self.fail_calls = set(fail_calls)
        self.calls = 0

    def __call__(self, prog, **kw):
        self.calls += 1
        res = solve(prog, **kw)
        if self.calls in self.fail_calls:
            return dataclasses.replace(res, status=Status.ITERATION_LIMIT)
        return res


@pytest.fixture(scope="module")
def started():
    cfg = make_config()
    return cfg, cmpc.initialize(cfg, np.array([1.0, 0.0]))


def test_zero_state_plan_is_zero():
    cfg = make_config(N=5)
    state = cmpc.initialize(cfg, np.zeros(2))
    assert np.max(np.abs(state.solution.knots)) <= 1e-6
    cmpc.plan_step(state, np.zeros(2), cfg.problem.T)
    assert not state.fallback_used and state.history[-1]["primary"] == "Optimal"
    assert np.max(np.abs(state.solution.inputs)) <= 1e-5


def test_initialize(started):
    cfg, state = started
    assert state.i == 0 and state.first_plan is state.solution
    assert state.spline.t_start == 0.0 and state.spline.t_end == pytest.approx(cfg.problem.N * cfg.problem.T)
    assert state.anchors.shape == (cfg.problem.N, 2) and state.ubar.shape == (cfg.problem.N,)
    # the shifted warm start ends at the terminal knot
    assert np.max(np.abs(state.anchors[-1])) <= 1e-6 and state.ubar[-1] == 0.0


def test_initialize_errors():
    cfg = make_config()
    with pytest.raises(PreconditionError):
        cmpc.initialize(cfg, np.array([2.5, 0.0]))
    with pytest.raises(PreconditionError):
        cmpc.initialize(cfg, np.array([np.nan, 0.0]))
    with pytest.raises(ConfigurationError):
        cmpc.initialize(make_config(N=1, T=0.2), np.array([1.9, 0.0]))


def test_control_delegates_and_goes_stale(started):
    cfg, state = started
    law = cfg.problem.law
    xd = state.spline.state(0.1)
    assert cmpc.control(state, xd, 0.1) == k_ff(SYS, state.spline, xd, 0.1)
    x = xd + np.array([0.01, -0.02])
    assert cmpc.control(state, x, 0.1) == k_clf(law, SYS, state.spline, x, 0.1)
    with pytest.raises(StaleSplineError):
        cmpc.control(state, x, cfg.problem.T + 0.01)


def test_plan_step_grid_check():
    cfg = make_config()
    state = cmpc.initialize(cfg, np.array([1.0, 0.0]))
    with pytest.raises(PreconditionError):
        cmpc.plan_step(state, np.array([1.0, 0.0]), 0.5 * cfg.problem.T)
    assert state.i == 0


def _advance(cfg, x0=(1.0, 0.0)):
    state = cmpc.initialize(cfg, np.array(x0))
    x1 = state.spline.state(cfg.problem.T)  # the planned state one period ahead
    return state, x1


def test_fallback_after_primary_failure():
    solver = FailingSolver({2})  # call 1 is the initial solve, call 2 the primary at i = 1
    cfg = make_config(solver=solver)
    state, x1 = _advance(cfg)
    prev_lins = state.lins
    cmpc.plan_step(state, x1, cfg.problem.T)
    assert state.fallback_used
    assert state.history[-1] == {"i": 1, "primary": "IterationLimit", "fallback": "Optimal"}
    assert state.lins[:-1] == prev_lins[1:]
    assert state.lins[-1] is state.lin_origin
    np.testing.assert_array_equal(state.used_anchors[-1], np.zeros(2))
    assert state.spline.t_start == pytest.approx(cfg.problem.T)


def test_hard_failure_reports_diagnostics():
    cfg = make_config(solver=FailingSolver({2, 3}))
    state, x1 = _advance(cfg)
    with pytest.raises(PlannerFailure) as info:
        cmpc.plan_step(state, x1, cfg.problem.T)
    diag = info.value.diagnostics
    assert diag["primary"]["status"] == "IterationLimit" and diag["fallback"]["status"] == "IterationLimit"
    assert diag["i"] == 1


def test_disturbed_run_stays_feasible():
    cfg = make_config()
    w = DisturbanceSignal("uniform", cfg.problem.law.wbar, 2, seed=5)
    log, state = cmpc.simulate(cfg, np.array([1.0, 0.0]), w, periods=50, dt=0.01)
    arr = log.arrays()
    assert log.aborted is None and len(log) == 50 * 30
    assert state.i == 49 and len(state.history) == 50
    assert all(h.get("primary") == "Optimal" or h.get("fallback") == "Optimal" for h in state.history)
    assert arr["state_ok"].all() and arr["input_ok"].all()
    assert np.max(arr["V"]) <= cfg.problem.law.level * (1 + 1e-4)
    assert np.max(np.abs(arr["u"])) <= cfg.problem.bounds.u_max


def test_spline_frozen_between_grid_times():
    cfg = make_config(N=5)
    T = cfg.problem.T
    seen = {}

    def observer(state, t, x, u):
        seen.setdefault(int(np.floor(t / T + 1e-9)), set()).add(id(state.spline))

    cmpc.simulate(cfg, np.array([0.5, 0.0]), DisturbanceSignal("zero", 0.0, 2), periods=4, dt=0.03,
                  observer=observer)
    assert sorted(seen) == [0, 1, 2, 3] and all(len(v) == 1 for v in seen.values())


def test_hold_mode_applies_planned_input():
    cfg = make_config(N=5)
    pairs = []
    cmpc.simulate(cfg, np.array([0.5, 0.0]), DisturbanceSignal("zero", 0.0, 2), periods=3, dt=0.03, hold=True,
                  observer=lambda st, t, x, u: pairs.append((u, cmpc.planned_input(st, t))))
    assert all(u == up for u, up in pairs)
