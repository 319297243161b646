"""Bezier curves built from state knots.

A segment of order ``p = 2n - 1`` is fixed by its control points ``xi0``
(length ``2n``). Derivative control points follow from the derivative matrix
``H``: ``xi_j = (H^j)^T xi0 / T^j``. Stacking ``xi_0 .. xi_{n-1}`` column-wise
gives ``2n`` points in state space whose convex hull contains the curve
``r(tau) = (r, r', ..., r^(n-1))``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import comb

from .errors import InvalidInputError, NumericalError, RangeError

__all__ = [
    "bernstein_eval",
    "derivative_matrix",
    "boundary_matrix",
    "control_point_maps",
    "BezierSegment",
    "BezierSpline",
    "SpatialControlPoints",
    "spline_from_knots",
    "evaluate",
    "spatial_points",
]

D_COND_LIMIT = 1e12
# knot-time snapping, relative to T
_TIME_TOL = 1e-9


def bernstein_eval(p, T, tau):
    """Bernstein basis of order ``p`` on ``[0, T]`` evaluated at ``tau``."""
    if tau < -_TIME_TOL * T or tau > T * (1 + _TIME_TOL):
        raise RangeError(f"tau={tau} outside [0, {T}]")
    s = min(max(tau / T, 0.0), 1.0)
    i = np.arange(p + 1)
    return comb(p, i) * s**i * (1.0 - s) ** (p - i)


@lru_cache(maxsize=None)
def _derivative_matrix(p):
    S = np.zeros((p, p + 1))
    R = np.zeros((p + 1, p))
    for i in range(p):
        S[i, i] = -p
        S[i, i + 1] = p
        # 1-based R_ii = (p+1-i)/p, R_{i+1,i} = i/p
        R[i, i] = (p - i) / p
        R[i + 1, i] = (i + 1) / p
    return S.T @ R.T


def derivative_matrix(p):
    """Matrix ``H`` with ``r'(tau) = xi0^T H z(tau) / T`` for order ``p``."""
    if p < 1:
        raise InvalidInputError("order must be at least 1")
    return _derivative_matrix(int(p)).copy()


@lru_cache(maxsize=None)
def _boundary(n, T):
    p = 2 * n - 1
    H = _derivative_matrix(p)
    z0 = bernstein_eval(p, T, 0.0)
    z1 = bernstein_eval(p, T, T)
    D = np.zeros((2 * n, 2 * n))
    Hj = np.eye(2 * n)
    for j in range(n):
        D[:, j] = Hj @ z0 / T**j
        D[:, n + j] = Hj @ z1 / T**j
        Hj = Hj @ H
    cond = np.linalg.cond(D)
    if not np.isfinite(cond) or cond > D_COND_LIMIT:
        raise NumericalError(f"boundary matrix is ill-conditioned (cond={cond:.3g})")
    return D, np.linalg.inv(D)


def boundary_matrix(n, T):
    """The ``2n x 2n`` matrix ``D`` with ``xi0^T D = [x0^T, x1^T]``."""
    if n < 1 or T <= 0:
        raise InvalidInputError("need n >= 1 and T > 0")
    return _boundary(int(n), float(T))[0].copy()


@lru_cache(maxsize=None)
def _maps(n, T):
    p = 2 * n - 1
    H = _derivative_matrix(p)
    Dinv = _boundary(n, T)[1]
    G = np.zeros((n + 1, 2 * n, 2 * n))
    Hj = np.eye(2 * n)
    for j in range(n + 1):
        # xi_j = (H^j)^T xi0 / T^j and xi0 = D^{-T} [x_k; x_{k+1}]
        G[j] = Hj.T @ Dinv.T / T**j
        Hj = Hj @ H
    return G


def control_point_maps(n, T):
    """Linear maps from stacked knots to derivative control points.

    Returns ``G`` of shape ``(n + 1, 2n, 2n)`` with
    ``xi_j = G[j] @ concat(x_k, x_{k+1})``. Row ``i`` of ``G[:n]`` taken
    across ``j`` gives the spatial point ``zeta_i``.
    """
    return _maps(int(n), float(T)).copy()


@dataclass(frozen=True)
class SpatialControlPoints:
    zeta: np.ndarray  # (2n, n), row i is zeta_i
    xi_n: np.ndarray  # (2n,)


@dataclass(frozen=True)
class BezierSegment:
    xi0: np.ndarray
    T: float
    n: int
    # rows are xi_0 .. xi_n
    xi: np.ndarray = field(repr=False)

    @classmethod
    def from_knots(cls, x0, x1, T):
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        x1 = np.asarray(x1, dtype=float).reshape(-1)
        n = x0.size
        G = _maps(n, float(T))
        xi = G @ np.concatenate([x0, x1])
        return cls(xi0=xi[0].copy(), T=float(T), n=n, xi=xi)

    def derivative(self, tau, j):
        """Scalar ``r^(j)(tau)`` for ``0 <= j <= n``."""
        if not 0 <= j <= self.n:
            raise InvalidInputError(f"derivative order {j} outside 0..{self.n}")
        z = bernstein_eval(2 * self.n - 1, self.T, tau)
        return float(self.xi[j] @ z)

    def state(self, tau):
        """Stacked ``(r, r', ..., r^(n-1))`` at ``tau``."""
        z = bernstein_eval(2 * self.n - 1, self.T, tau)
        return self.xi[: self.n] @ z

    def state_and_top(self, tau):
        z = bernstein_eval(2 * self.n - 1, self.T, tau)
        vals = self.xi @ z
        return vals[: self.n], float(vals[self.n])


@dataclass(frozen=True)
class BezierSpline:
    segments: tuple
    t_start: float
    T: float
    knots: np.ndarray  # (N+1, n)

    @property
    def n(self):
        return self.knots.shape[1]

    @property
    def N(self):
        return len(self.segments)

    @property
    def t_end(self):
        return self.t_start + self.N * self.T

    def locate(self, t):
        """Segment index and local time for ``t`` (right-continuous at knots)."""
        s = (t - self.t_start) / self.T
        if s < -_TIME_TOL or s > self.N * (1 + _TIME_TOL) + _TIME_TOL:
            raise RangeError(f"t={t} outside [{self.t_start}, {self.t_end}]")
        k = int(np.floor(s + _TIME_TOL))
        k = min(max(k, 0), self.N - 1)
        tau = min(max(t - (self.t_start + k * self.T), 0.0), self.T)
        return k, tau

    def state(self, t):
        k, tau = self.locate(t)
        return self.segments[k].state(tau)

    def derivative(self, t, j):
        k, tau = self.locate(t)
        return self.segments[k].derivative(tau, j)

    def state_and_top(self, t):
        """``x_d(t)`` together with the scalar ``r^(n)(t)``."""
        k, tau = self.locate(t)
        return self.segments[k].state_and_top(tau)


def spline_from_knots(knots, T, t_start=0.0):
    """Piecewise Bezier reference interpolating ``knots`` every ``T`` seconds."""
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 2 or knots.shape[0] < 2:
        raise InvalidInputError("need a (N+1, n) array of knots with N >= 1")
    if not np.all(np.isfinite(knots)):
        raise InvalidInputError("knots must be finite")
    if T <= 0:
        raise InvalidInputError("T must be positive")
    segs = tuple(BezierSegment.from_knots(knots[k], knots[k + 1], T) for k in range(knots.shape[0] - 1))
    return BezierSpline(segments=segs, t_start=float(t_start), T=float(T), knots=knots.copy())


def evaluate(spline, t, j=0):
    """``j == 0``: full state ``x_d(t)``; ``j >= 1``: scalar ``r^(j)(t)``."""
    if j == 0:
        return spline.state(t)
    return spline.derivative(t, j)


def spatial_points(segment):
    """State-space control points ``zeta_i`` and the top-derivative points."""
    n = segment.n
    return SpatialControlPoints(zeta=segment.xi[:n].T.copy(), xi_n=segment.xi[n].copy())
