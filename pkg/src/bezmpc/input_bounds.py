"""Quadratic bound on the tracking input and its conic reformulation.

For tuning knobs ``alpha, beta >= 0`` the feedback-linearizing input is
bounded by ``sigma^T M sigma / 2 + N(xbar)^T sigma + Gamma(xbar)`` where
``sigma`` measures how far the reference strays from the linearization
anchor ``xbar``. Planning keeps that bound below ``u_max``.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidInputError, NumericalError, PreconditionError
from .numerics import psd_project_2x2

__all__ = [
    "InputBoundParams",
    "SocBlock",
    "make_params",
    "sigma_profile",
    "fbl_bound_rhs",
    "soc_reformulate",
]


@dataclass(frozen=True)
class InputBoundParams:
    alpha: float
    beta: float
    u_max: float
    M: np.ndarray
    lam1: float
    v1: np.ndarray
    K_norm: float
    ebar: float
    g: Callable = None

    def ginv_abs(self, x_bar):
        return abs(1.0 / self.g(np.asarray(x_bar, dtype=float)))

    def N(self, x_bar):
        gi = self.ginv_abs(x_bar)
        a, b, e, k = self.alpha, self.beta, self.ebar, self.K_norm
        return np.array([2 * a * b * e + a * gi + b * k * e, gi + b * e])

    def Gamma(self, x_bar):
        gi = self.ginv_abs(x_bar)
        return self.ebar * (self.beta * self.ebar + gi) * (self.alpha + self.K_norm)


def make_params(alpha, beta, u_max, law, sys):
    if alpha < 0 or beta < 0:
        raise PreconditionError("alpha and beta must be nonnegative")
    if u_max <= 0:
        raise PreconditionError("u_max must be positive")
    M, lam1, v1 = psd_project_2x2(np.array([[2 * alpha * beta, beta], [beta, 0.0]]))
    return InputBoundParams(
        alpha=float(alpha), beta=float(beta), u_max=float(u_max), M=M, lam1=float(lam1), v1=v1,
        K_norm=float(np.linalg.norm(law.K)), ebar=law.ebar, g=sys.g,
    )


def sigma_profile(spline, x_bar, f_bar, t):
    """``(||x_d(t) - xbar||, |x_d^n'(t) - f(xbar)|)`` for ``t`` in the anchor's segment."""
    xd, top = spline.state_and_top(t)
    return np.array([np.linalg.norm(xd - np.asarray(x_bar, dtype=float)), abs(top - f_bar)])


def fbl_bound_rhs(params, x_bar, sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise InvalidInputError("sigma must be componentwise nonnegative")
    return float(0.5 * sigma @ params.M @ sigma + params.N(x_bar) @ sigma + params.Gamma(x_bar))


@dataclass(frozen=True)
class SocBlock:
    """Cone and linear row over ``(s, sigma)`` equivalent to the quadratic bound.

    Cone: ``||(Lf^T s, sigma)|| <= sigma + 1/2`` with ``Lf Lf^T = M / 2``.
    Row:  ``N^T s + sigma <= u_max - Gamma - 1/4``.
    """

    Lf: np.ndarray  # (2, r), r in {0, 1}
    N: np.ndarray
    Gamma: float
    u_max: float

    @property
    def rhs(self):
        return self.u_max - self.Gamma - 0.25

    def cone_rows(self):
        """Affine map ``(F, g)`` so that ``F @ (s1, s2, sigma) + g`` lies in the SOC."""
        r = self.Lf.shape[1]
        F = np.zeros((r + 2, 3))
        g = np.zeros(r + 2)
        F[0, 2] = 1.0
        g[0] = 0.5
        F[1:1 + r, :2] = self.Lf.T
        F[1 + r, 2] = 1.0
        return F, g

    def linear_row(self):
        return np.array([self.N[0], self.N[1], 1.0]), self.rhs

    def contains(self, s, sigma, tol=0.0):
        F, g = self.cone_rows()
        v = F @ np.array([s[0], s[1], sigma]) + g
        a, rhs = self.linear_row()
        cone_ok = np.linalg.norm(v[1:]) <= v[0] + tol
        row_ok = a @ np.array([s[0], s[1], sigma]) <= rhs + tol
        return bool(cone_ok and row_ok)

    def constructive_sigma(self, s):
        """The certificate ``sigma`` used to show the quadratic bound implies the block."""
        return self.rhs - float(self.N @ np.asarray(s, dtype=float))


def soc_reformulate(params, x_bar):
    lam = params.lam1
    if np.max(np.abs(params.M)) == 0.0:
        Lf = np.zeros((2, 0))
    else:
        # M is rank one: lam * v v^T
        if lam < 0:
            raise NumericalError("input-bound matrix is not PSD")
        Lf = (np.sqrt(0.5 * lam) * params.v1).reshape(2, 1)
        if np.max(np.abs(Lf @ Lf.T - 0.5 * params.M)) > 1e-9 * max(1.0, lam):
            raise NumericalError("rank-one factor does not reproduce M")
    return SocBlock(Lf=Lf, N=params.N(x_bar), Gamma=params.Gamma(x_bar), u_max=params.u_max)
