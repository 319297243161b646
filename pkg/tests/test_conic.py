import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bezmpc.conic import ConicProgram, Status, Tolerances, dump_program, load_program, project_soc, solve
from bezmpc.errors import InvalidInputError

from oracles import lattice_qp_soc


def _ball_program(P, q, c, r):
    prog = ConicProgram(2)
    prog.add_quadratic(P, q)
    F = np.zeros((3, 2))
    F[1:] = np.eye(2)
    prog.add_soc(F, np.r_[r, -c])
    return prog


def test_examples():
    prog = ConicProgram(1)
    prog.add_quadratic(np.eye(1))
    prog.add_eq([[1.0]], [3.0])
    res = solve(prog)
    assert res.status is Status.OPTIMAL
    assert res.x[0] == pytest.approx(3.0, abs=1e-6) and res.objective == pytest.approx(4.5, abs=1e-5)

    prog = ConicProgram(1)
    prog.add_quadratic(np.zeros((1, 1)), [1.0])
    prog.add_soc([[0.0], [1.0]], [1.0, 0.0])
    res = solve(prog)
    assert res.status is Status.OPTIMAL and res.x[0] == pytest.approx(-1.0, abs=1e-6)

    prog = ConicProgram(1)
    prog.add_eq([[1.0]], [1.0])
    prog.add_eq([[1.0]], [2.0])
    assert solve(prog).status is Status.PRIMAL_INFEASIBLE


def test_project_soc_examples():
    np.testing.assert_array_equal(project_soc([2.0, 1.0, 0.0]), [2.0, 1.0, 0.0])
    np.testing.assert_array_equal(project_soc([-2.0, 1.0, 0.0]), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(project_soc([0.0, 1.0, 0.0]), [0.5, 0.5, 0.0])


@given(arrays(float, st.integers(1, 5), elements=st.floats(-1e3, 1e3)))
def test_project_soc_idempotent_and_in_cone(v):
    p = project_soc(v)
    assert np.linalg.norm(p[1:]) <= p[0] * (1 + 1e-14) + 1e-300
    np.testing.assert_allclose(project_soc(p), p, rtol=1e-14, atol=1e-14 * max(1.0, np.max(np.abs(v))))
    # the residual is orthogonal to the projection
    assert abs((v - p) @ p) <= 1e-9 * max(1.0, v @ v)


def test_malformed_programs():
    prog = ConicProgram(2)
    with pytest.raises(InvalidInputError):
        prog.add_soc(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(InvalidInputError):
        prog.add_eq(np.zeros((1, 3)), [0.0])
    with pytest.raises(InvalidInputError):
        prog.add_nonneg([5])
    prog.add_quadratic(-np.eye(2))
    with pytest.raises(InvalidInputError):
        solve(prog)
    with pytest.raises(InvalidInputError):
        ConicProgram(0)


def test_lattice_oracle():
    rng = np.random.default_rng(17)
    for _ in range(100):
        B = rng.normal(size=(2, 2))
        P = B @ B.T + 0.5 * np.eye(2)
        q = rng.uniform(-4, 4, 2)
        c = rng.uniform(-1, 1, 2)
        r = rng.uniform(0.3, 1.5)
        res = solve(_ball_program(P, q, c, r))
        assert res.status is Status.OPTIMAL
        x_grid, f_grid = lattice_qp_soc(P, q, c, r)
        assert np.max(np.abs(res.x - x_grid)) <= 2e-3
        assert res.objective <= f_grid + 1e-6


def test_infeasible_instances_flagged():
    rng = np.random.default_rng(19)
    for _ in range(10):
        c, r = rng.uniform(-1, 1, 2), rng.uniform(0.3, 1.0)
        prog = _ball_program(np.eye(2), rng.normal(size=2), c, r)
        d = rng.normal(size=2)
        d /= np.linalg.norm(d)
        # half-plane d.x >= d.c + 1.5 r misses the ball
        prog.add_le(-d, -(d @ c) - 1.5 * r)
        assert solve(prog).status is Status.PRIMAL_INFEASIBLE


def test_iteration_limit_reported():
    prog = _ball_program(np.eye(2), np.array([3.0, -1.0]), np.zeros(2), 1.0)
    res = solve(prog, max_iter=3)
    assert res.status is Status.ITERATION_LIMIT and res.iterations == 3


def test_kkt_stationarity():
    rng = np.random.default_rng(23)
    tol = Tolerances()
    for _ in range(20):
        B = rng.normal(size=(3, 3))
        prog = ConicProgram(3)
        prog.add_quadratic(B @ B.T + 0.1 * np.eye(3), rng.normal(size=3))
        c = rng.uniform(-0.5, 0.5, 3)
        xf = -c
        xf[0] = abs(xf[0])  # feasible for every constraint below
        a = rng.normal(size=(1, 3))
        prog.add_eq(a, a @ xf)
        prog.add_nonneg([0])
        F = np.zeros((4, 3))
        F[1:] = np.eye(3)
        prog.add_soc(F, np.r_[2.0, c])
        res = solve(prog)
        assert res.status is Status.OPTIMAL
        A, b, _ = prog.standard_form()
        stat = prog.P @ res.x + prog.q + A.T @ res.y
        assert np.max(np.abs(stat)) <= 10 * tol.eps_abs * max(1.0, np.max(np.abs(prog.q)))


def test_nonneg_and_inequalities():
    prog = ConicProgram(2)
    prog.add_quadratic(np.eye(2), [2.0, -4.0])
    prog.add_nonneg([0, 1])
    prog.add_le([[0.0, 1.0]], [1.5])
    res = solve(prog)
    np.testing.assert_allclose(res.x, [0.0, 1.5], atol=1e-6)


def test_dump_round_trip():
    prog = _ball_program(np.diag([2.0, 1.0]), np.array([1.0, -1.0]), np.array([0.1, 0.2]), 0.7)
    prog.add_eq([[1.0, 1.0]], [0.3])
    prog.add_nonneg([1])
    text = dump_program(prog)
    assert text.startswith("conic-program 1\n2 ")
    back = load_program(text)
    for a, b in zip(prog.standard_form()[:2], back.standard_form()[:2]):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(solve(back).x, solve(prog).x, atol=1e-12)


def test_deterministic():
    prog = _ball_program(np.eye(2), np.array([5.0, 1.0]), np.zeros(2), 1.0)
    a, b = solve(prog), solve(prog)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations
