"""Low-level tracking controllers and their robust invariant tube.

The error ``e = x - x_d(t)`` of a feedback-linearized integrator chain obeys
``e' = F e + w`` with ``F`` in companion form. A quadratic Lyapunov function
``V = e^T P e`` with ``F^T P + P F = -Q`` gives a tube ``V <= gamma * wbar^2``
that the disturbed closed loop cannot leave.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InternalError, PreconditionError, SingularityError
from .numerics import ellipsoid_support, solve_lyapunov, symmetrize

__all__ = [
    "TrackingLaw",
    "StatePolytope",
    "design_law",
    "companion_gain",
    "error_drift",
    "k_ff",
    "k_fbl",
    "k_clf",
    "clf_constraint",
    "lyapunov_value",
    "in_tube",
    "tighten_polytope",
    "box_polytope",
]

G_MIN = 1e-8


@dataclass(frozen=True)
class TrackingLaw:
    K: np.ndarray
    F: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    gamma: float
    ebar: float
    wbar: float
    lam_min_Q: float
    lam_min_P: float
    lam_max_P: float

    @property
    def level(self):
        """Tube level ``gamma * wbar^2``."""
        return self.gamma * self.wbar**2


def companion_gain(poles):
    """Gain ``K`` placing the companion matrix ``[[0, I], [-K^T]]`` at ``poles``."""
    poles = np.asarray(poles, dtype=float).reshape(-1)
    if np.any(poles >= 0):
        raise PreconditionError("poles must be strictly negative")
    coeffs = np.poly(poles).real  # s^n + c_{n-1} s^{n-1} + ... + c_0, highest first
    return coeffs[1:][::-1].copy()


def design_law(poles, Q=None, wbar=0.0):
    """Companion-form pole placement plus Lyapunov pair and tube constants."""
    K = companion_gain(poles)
    n = K.size
    F = np.zeros((n, n))
    F[:-1, 1:] = np.eye(n - 1)
    F[-1, :] = -K
    Q = np.eye(n) if Q is None else symmetrize(Q, "Q")
    eq = np.linalg.eigvalsh(Q)
    if eq[0] <= 0:
        raise PreconditionError("Q must be positive definite")
    if wbar < 0:
        raise PreconditionError("wbar must be nonnegative")
    P = solve_lyapunov(F, Q)
    ep = np.linalg.eigvalsh(P)
    gamma = 4.0 * ep[-1] ** 3 / eq[0] ** 2
    ebar = float(np.sqrt(gamma * wbar**2 / ep[0]))
    return TrackingLaw(K=K, F=F, P=P, Q=Q, gamma=float(gamma), ebar=ebar, wbar=float(wbar),
                       lam_min_Q=float(eq[0]), lam_min_P=float(ep[0]), lam_max_P=float(ep[-1]))


def _ginv(sys, x):
    g = sys.g(x)
    if abs(g) < G_MIN:
        raise SingularityError(f"|g(x)| = {abs(g):.3g} below {G_MIN}")
    return 1.0 / g


def error_drift(sys, e, fx, top):
    """Drift of the error dynamics: shifted error plus ``f(x) - x_d^n'`` on the last row."""
    out = np.empty_like(e)
    out[:-1] = e[1:]
    out[-1] = fx - top
    return out


def k_ff(sys, spline, x, t):
    xd, top = spline.state_and_top(t)
    return -_ginv(sys, x) * (sys.f(x) - top)


def k_fbl(law, sys, spline, x, t):
    """Feedback-linearizing tracking input."""
    x = np.asarray(x, dtype=float)
    xd, top = spline.state_and_top(t)
    e = x - xd
    return _ginv(sys, x) * (-(sys.f(x) - top) - law.K @ e)


def clf_constraint(law, sys, spline, x, t):
    """Coefficients ``(a, b)`` of the CLF decrease condition ``a u <= b``."""
    x = np.asarray(x, dtype=float)
    xd, top = spline.state_and_top(t)
    e = x - xd
    gradV = 2.0 * (law.P @ e)
    a = gradV[-1] * sys.g(x)
    b = -law.lam_min_Q * (e @ e) - gradV @ error_drift(sys, e, sys.f(x), top)
    return a, b


def k_clf(law, sys, spline, x, t, a_tol=1e-14):
    """Closed-form solution of the single-input CLF quadratic program.

    Minimizes ``(u - k_ff)^2 / 2`` subject to ``a u <= b``.
    """
    x = np.asarray(x, dtype=float)
    xd, top = spline.state_and_top(t)
    e = x - xd
    ginv = _ginv(sys, x)
    fx = sys.f(x)
    uff = -ginv * (fx - top)
    gradV = 2.0 * (law.P @ e)
    a = gradV[-1] / ginv
    b = -law.lam_min_Q * (e @ e) - gradV @ error_drift(sys, e, fx, top)
    if abs(a) <= a_tol:
        if b < -1e-9:
            raise InternalError(f"CLF constraint infeasible with zero input authority (b={b:.3g})")
        return uff
    if a * uff <= b:
        return uff
    return b / a


def lyapunov_value(law, spline, x, t):
    e = np.asarray(x, dtype=float) - spline.state(t)
    return float(e @ law.P @ e)


def in_tube(law, spline, x, t, rtol=1e-12):
    level = law.level
    return lyapunov_value(law, spline, x, t) <= level * (1.0 + rtol) + (rtol if level == 0 else 0.0)


@dataclass(frozen=True)
class StatePolytope:
    """``{x : L @ x <= ell}`` with unit-norm rows."""

    L: np.ndarray
    ell: np.ndarray

    @classmethod
    def from_rows(cls, L, ell):
        L = np.atleast_2d(np.asarray(L, dtype=float))
        ell = np.asarray(ell, dtype=float).reshape(-1)
        if L.shape[0] != ell.size:
            raise PreconditionError("row count mismatch between L and ell")
        norms = np.linalg.norm(L, axis=1)
        if np.any(norms == 0):
            raise PreconditionError("polytope has a zero row")
        return cls(L=L / norms[:, None], ell=ell / norms)

    @property
    def q(self):
        return self.ell.size

    def slack(self, x):
        """Per-row ``ell - L x``; all nonnegative iff ``x`` is inside."""
        return self.ell - self.L @ np.asarray(x, dtype=float)

    def contains(self, x, tol=0.0):
        return bool(np.all(self.slack(x) >= -tol))

    def check_bounded(self):
        """Raise unless the origin is interior and every coordinate is bounded."""
        from scipy.optimize import linprog

        if np.any(self.ell <= 0):
            raise ConfigurationError("origin is not strictly inside the polytope")
        n = self.L.shape[1]
        for i in range(n):
            for sgn in (1.0, -1.0):
                c = np.zeros(n)
                c[i] = -sgn
                res = linprog(c, A_ub=self.L, b_ub=self.ell, bounds=[(None, None)] * n, method="highs")
                if res.status == 3:
                    raise ConfigurationError("polytope is unbounded")


def box_polytope(bounds):
    """Axis-aligned box ``|x_i| <= bounds[i]``."""
    bounds = np.asarray(bounds, dtype=float)
    n = bounds.size
    L = np.vstack([np.eye(n), -np.eye(n)])
    return StatePolytope.from_rows(L, np.concatenate([bounds, bounds]))


def tighten_polytope(poly, law):
    """Shrink each row offset by the tube ellipsoid's support in that direction."""
    shrink = np.array([ellipsoid_support(Lj, law.P, law.level) for Lj in poly.L])
    ell = poly.ell - shrink
    if np.any(ell < 0):
        raise ConfigurationError(
            "tube ellipsoid does not fit in the state polytope: origin outside the tightened set"
        )
    return StatePolytope(L=poly.L.copy(), ell=ell)
