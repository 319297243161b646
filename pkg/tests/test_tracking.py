import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bezmpc.bezier import spline_from_knots
from bezmpc.conic import ConicProgram, Tolerances, solve
from bezmpc.dynamics import DisturbanceSignal, double_integrator, integrate_closed_loop, sincube_system
from bezmpc.errors import ConfigurationError, PreconditionError, SingularityError
from bezmpc.numerics import solve_lyapunov
from bezmpc.tracking import (
    StatePolytope,
    box_polytope,
    clf_constraint,
    companion_gain,
    design_law,
    in_tube,
    k_clf,
    k_fbl,
    k_ff,
    lyapunov_value,
    tighten_polytope,
)

from conftest import random_hurwitz

KNOTS = np.array([[1.2, 0.0], [0.9, -0.6], [0.4, -0.5], [0.1, -0.2], [0.0, 0.0]])


@pytest.fixture
def reference():
    return spline_from_knots(KNOTS, 0.5)


def test_design_law_examples():
    law = design_law([-1.0, -1.0])
    np.testing.assert_allclose(law.K, [1.0, 2.0])
    np.testing.assert_allclose(law.F, [[0, 1], [-1, -2]])
    P = solve_lyapunov(law.F, np.eye(2))
    assert law.gamma == pytest.approx(4 * np.max(np.linalg.eigvalsh(P)) ** 3, rel=1e-12)
    assert law.ebar == 0.0 and law.level == 0.0
    with pytest.raises(PreconditionError):
        design_law([-1.0, 0.5])
    with pytest.raises(PreconditionError):
        design_law([-1.0, -1.0], Q=-np.eye(2))


@given(st.lists(st.floats(-6.0, -0.2), min_size=1, max_size=4))
def test_companion_gain_places_poles(poles):
    law = design_law(poles, wbar=0.01)
    # characteristic polynomials: eigenvalues of repeated poles are ill-conditioned
    np.testing.assert_allclose(np.poly(law.F), np.poly(poles), rtol=1e-10, atol=1e-10)
    assert np.linalg.norm(law.F.T @ law.P + law.P @ law.F + law.Q) <= 1e-10 * max(1.0, np.linalg.norm(law.P))
    assert np.array_equal(law.K, companion_gain(poles))


def test_tube_constants_match_formulas(rng):
    for _ in range(100):
        n = int(rng.integers(1, 5))
        poles = -rng.uniform(0.3, 5.0, n)
        B = rng.normal(size=(n, n))
        Q = B @ B.T + 0.3 * np.eye(n)
        wbar = rng.uniform(0, 0.1)
        law = design_law(poles, Q=Q, wbar=wbar)
        ep, eq = np.linalg.eigvalsh(law.P), np.linalg.eigvalsh(law.Q)
        gamma = 4 * ep[-1] ** 3 / eq[0] ** 2
        assert abs(law.gamma - gamma) <= 1e-12 * gamma
        assert abs(law.ebar - np.sqrt(gamma * wbar**2 / ep[0])) <= 1e-12 * max(law.ebar, 1.0)


def test_lyapunov_sandwich(rng):
    law = design_law([-2.0, -3.0], wbar=0.01)
    for e in rng.normal(size=(200, 2)):
        V = e @ law.P @ e
        assert law.lam_min_P * (e @ e) <= V * (1 + 1e-12)
        assert V <= law.lam_max_P * (e @ e) * (1 + 1e-12)


def test_k_fbl_examples(reference):
    sys = sincube_system()
    law = design_law([-2.0, -2.0])
    xd, top = reference.state_and_top(0.3)
    assert k_fbl(law, sys, reference, xd, 0.3) == pytest.approx(top - sys.f(xd))
    zero = spline_from_knots(np.zeros((2, 2)), 1.0)
    x = np.array([0.3, -0.7])
    assert k_fbl(law, double_integrator(), zero, x, 0.5) == pytest.approx(-law.K @ x)


def test_k_fbl_cancels_nonlinearity(reference):
    sys = sincube_system()
    law = design_law([-2.0, -2.0])
    rng = np.random.default_rng(2)
    for _ in range(50):
        t = rng.uniform(0, reference.t_end)
        x = rng.uniform(-2, 2, 2)
        xd, top = reference.state_and_top(t)
        u = k_fbl(law, sys, reference, x, t)
        edot = sys.vector_field(x, u) - np.r_[xd[1], top]
        np.testing.assert_allclose(edot, law.F @ (x - xd), atol=1e-9)


def test_singular_gain_guard(reference):
    sys = sincube_system()
    bad = type(sys)(n=2, f=sys.f, g=lambda x: 1e-12, df_dx=sys.df_dx, dg_dx=sys.dg_dx)
    with pytest.raises(SingularityError):
        k_fbl(design_law([-1.0, -1.0]), bad, reference, np.zeros(2), 0.0)


def test_k_clf_on_reference_returns_feedforward(reference):
    sys, law = sincube_system(), design_law([-2.0, -2.0])
    xd = reference.state(1.1)
    assert k_clf(law, sys, reference, xd, 1.1) == k_ff(sys, reference, xd, 1.1)
    a, b = clf_constraint(law, sys, reference, xd, 1.1)
    assert a == 0.0 and b == 0.0


def test_k_clf_properties(reference):
    sys, law = sincube_system(), design_law([-2.0, -2.0])
    rng = np.random.default_rng(9)
    for _ in range(300):
        t = rng.uniform(0, reference.t_end)
        x = rng.uniform(-2, 2, 2)
        e = x - reference.state(t)
        u = k_clf(law, sys, reference, x, t)
        uff = k_ff(sys, reference, x, t)
        ufbl = k_fbl(law, sys, reference, x, t)
        a, b = clf_constraint(law, sys, reference, x, t)
        # own constraint, in the form grad V (f_xd + g u) + lam_min(Q) |e|^2 <= 0
        assert a * u - b <= 1e-9 * max(1.0, abs(b))
        if a * ufbl <= b + 1e-12:
            assert abs(u - uff) <= abs(ufbl - uff) + 1e-12
        assert np.isfinite(e @ e)


def test_k_clf_matches_generic_qp(reference):
    sys, law = sincube_system(), design_law([-2.0, -2.0])
    rng = np.random.default_rng(4)
    for _ in range(20):
        t = rng.uniform(0, reference.t_end)
        x = rng.uniform(-1.5, 1.5, 2)
        a, b = clf_constraint(law, sys, reference, x, t)
        uff = k_ff(sys, reference, x, t)
        prog = ConicProgram(1)
        prog.add_quadratic(np.eye(1), [-uff])
        prog.add_le([[a]], [b])
        res = solve(prog, tol=Tolerances(eps_abs=1e-11, eps_rel=1e-11))
        assert res.optimal
        assert k_clf(law, sys, reference, x, t) == pytest.approx(res.x[0], abs=1e-8 * max(1.0, abs(res.x[0])))


def test_in_tube_examples(reference):
    law = design_law([-2.0, -2.0], wbar=0.05)
    xd = reference.state(0.7)
    assert lyapunov_value(law, reference, xd, 0.7) == 0.0 and in_tube(law, reference, xd, 0.7)
    lam, vecs = np.linalg.eigh(law.P)
    e = vecs[:, 0] * np.sqrt(law.level / lam[0])
    assert in_tube(law, reference, xd + e, 0.7)
    assert not in_tube(law, reference, xd + 1.001 * e, 0.7)
    exact = design_law([-2.0, -2.0], wbar=0.0)
    assert in_tube(exact, reference, xd, 0.7)
    assert not in_tube(exact, reference, xd + 1e-6, 0.7)


@pytest.mark.parametrize("controller", [k_fbl, k_clf])
def test_tube_invariance(reference, controller):
    sys = sincube_system()
    law = design_law([-2.0, -2.0], wbar=0.02)
    lam, vecs = np.linalg.eigh(law.P)
    x0 = reference.state(0.0) + 0.999 * vecs[:, 1] * np.sqrt(law.level / lam[1])
    for kind in ("sinusoid", "uniform"):
        w = DisturbanceSignal(kind, law.wbar, 2, seed=3)
        _, log = integrate_closed_loop(sys, lambda x, t: controller(law, sys, reference, x, t), x0, w,
                                       0.0, reference.t_end, 0.002,
                                       annotate=lambda t, x, u: {"V": lyapunov_value(law, reference, x, t)})
        assert np.max(log.V) <= law.level * (1 + 1e-6)


def test_polytope_basics():
    box = box_polytope([2.0, 1.0])
    assert box.contains([2.0, -1.0]) and not box.contains([2.0 + 1e-9, 0.0])
    poly = StatePolytope.from_rows([[3.0, 4.0]], [5.0])
    np.testing.assert_allclose(poly.L, [[0.6, 0.8]])
    assert poly.ell[0] == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        poly.check_bounded()
    box.check_bounded()
    with pytest.raises(ConfigurationError):
        StatePolytope.from_rows(np.eye(2), [1.0, -1.0]).check_bounded()


def test_tighten_polytope_examples():
    box = box_polytope([2.0, 2.0])
    zero = design_law([-1.0, -1.0], wbar=0.0)
    np.testing.assert_array_equal(tighten_polytope(box, zero).ell, box.ell)

    class UnitLaw:
        P = np.eye(2)
        level = 1.0

    np.testing.assert_allclose(tighten_polytope(box, UnitLaw).ell, np.ones(4))
    with pytest.raises(ConfigurationError):
        tighten_polytope(box_polytope([0.01, 0.01]), design_law([-1.0, -1.0], wbar=0.5))


@given(arrays(float, 2, elements=st.floats(-1.0, 1.0)), st.integers(0, 2**31 - 1))
def test_tightened_points_keep_tube_inside(p, seed):
    box = box_polytope([2.0, 1.0])
    law = design_law([-2.0, -2.0], wbar=0.03)
    tight = tighten_polytope(box, law)
    if not tight.contains(p):
        return
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(1000, 2))
    U /= np.linalg.norm(U, axis=1)[:, None]
    U *= rng.uniform(0, 1, (1000, 1)) ** 0.5
    R = np.linalg.cholesky(law.P).T
    V = np.linalg.solve(R, np.sqrt(law.level) * U.T).T
    assert all(box.contains(p + v, tol=1e-12) for v in V)
