"""Assemble the planning problem over Bezier knots as a cone program.

Decision variables, in order: knots ``x_0 .. x_N`` (``n`` each), inputs
``u_0 .. u_{N-1}``, input-bound slacks ``s_k`` (2 each) and the auxiliary
scalars ``sigma_k`` of the cone reformulation. Control points are never
variables: they are linear images of consecutive knots.
"""

from dataclasses import dataclass, field

import numpy as np

from .bezier import control_point_maps, spline_from_knots
from .conic import ConicProgram, Status
from .errors import InternalError, InvalidInputError, PreconditionError
from .input_bounds import InputBoundParams, soc_reformulate
from .tracking import StatePolytope, TrackingLaw, tighten_polytope

__all__ = ["FtocpConfig", "FtocpSolution", "Layout", "build", "extract", "make_config"]


@dataclass(frozen=True)
class FtocpConfig:
    N: int
    T: float
    W_x: np.ndarray
    w_u: float
    W_f: np.ndarray
    polytope: StatePolytope  # original state constraints
    tightened: StatePolytope
    bounds: InputBoundParams
    law: TrackingLaw
    f: object  # scalar drift of the system model
    ic_margin: float = 1e-4  # relative shrink of the initial-condition ellipsoid radius

    @property
    def n(self):
        return self.W_x.shape[0]


def make_config(N, T, polytope, law, bounds, f, W_x=None, w_u=0.1, W_f=None, ic_margin=1e-4):
    """Validate weights and tighten the polytope by the tracking tube."""
    n = polytope.L.shape[1]
    W_x = np.eye(n) if W_x is None else np.asarray(W_x, dtype=float)
    W_f = 10.0 * np.eye(n) if W_f is None else np.asarray(W_f, dtype=float)
    if N < 1:
        raise InvalidInputError("horizon N must be at least 1")
    if T <= 0:
        raise InvalidInputError("period T must be positive")
    for name, W in (("W_x", W_x), ("W_f", W_f)):
        if W.shape != (n, n) or np.min(np.linalg.eigvalsh(0.5 * (W + W.T))) < -1e-12:
            raise InvalidInputError(f"{name} must be an {n}x{n} PSD matrix")
    if w_u < 0:
        raise InvalidInputError("w_u must be nonnegative")
    if not 0 <= ic_margin < 1:
        raise InvalidInputError("ic_margin must lie in [0, 1)")
    tight = tighten_polytope(polytope, law)
    return FtocpConfig(N=int(N), T=float(T), W_x=W_x, w_u=float(w_u), W_f=W_f, polytope=polytope,
                       tightened=tight, bounds=bounds, law=law, f=f, ic_margin=float(ic_margin))


@dataclass(frozen=True)
class Layout:
    n: int
    N: int

    def x(self, k):
        return slice(k * self.n, (k + 1) * self.n)

    def u(self, k):
        return (self.N + 1) * self.n + k

    def s(self, k):
        base = (self.N + 1) * self.n + self.N
        return slice(base + 2 * k, base + 2 * k + 2)

    def sig(self, k):
        return (self.N + 1) * self.n + 3 * self.N + k

    @property
    def size(self):
        return (self.N + 1) * self.n + 4 * self.N


@dataclass
class FtocpSolution:
    knots: np.ndarray  # (N+1, n)
    inputs: np.ndarray  # (N,)
    slacks: np.ndarray  # (N, 2)
    control_points: np.ndarray  # (N, 2n), xi_0 per segment
    status: Status
    objective: float
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    def spline(self, T, t_start=0.0):
        return spline_from_knots(self.knots, T, t_start)


def build(cfg, x_meas, anchors, lins):
    """Cone program for one planning step.

    ``anchors`` are the ``N`` linearization states ``xbar_k`` and ``lins`` the
    matching discrete linearizations. Drift values ``f(xbar_k)`` enter as
    constants.
    """
    n, N = cfg.n, cfg.N
    anchors = np.asarray(anchors, dtype=float)
    x_meas = np.asarray(x_meas, dtype=float).reshape(-1)
    if anchors.shape != (N, n) or len(lins) != N or x_meas.size != n:
        raise InvalidInputError("anchors and linearizations must match (N, n)")
    if not (np.all(np.isfinite(anchors)) and np.all(np.isfinite(x_meas))):
        raise InvalidInputError("non-finite state or anchor")
    f_anchor = [float(cfg.f(a)) for a in anchors]
    lay = Layout(n, N)
    prog = ConicProgram(lay.size)
    prog.names = {"layout": lay}

    # objective: sum x^T W_x x + w_u u^2 + x_N^T W_f x_N
    Pobj = np.zeros((lay.size, lay.size))
    for k in range(N):
        Pobj[lay.x(k), lay.x(k)] = 2.0 * cfg.W_x
        Pobj[lay.u(k), lay.u(k)] = 2.0 * cfg.w_u
    Pobj[lay.x(N), lay.x(N)] = 2.0 * cfg.W_f
    prog.add_quadratic(Pobj)

    # linearized dynamics
    for k, lin in enumerate(lins):
        row = np.zeros((n, lay.size))
        row[:, lay.x(k + 1)] = np.eye(n)
        row[:, lay.x(k)] = -lin.A
        row[:, lay.u(k)] = -lin.B
        prog.add_eq(row, lin.C)

    # terminal point at the origin
    row = np.zeros((n, lay.size))
    row[:, lay.x(N)] = np.eye(n)
    prog.add_eq(row, np.zeros(n))

    # x_0 inside the tube ellipsoid around the measured state; the radius is
    # shrunk slightly so solver tolerance cannot push V past the tube level
    law = cfg.law
    if law.level > 0:
        R = np.linalg.cholesky(law.P).T  # R^T R = P
        F = np.zeros((n + 1, lay.size))
        g = np.zeros(n + 1)
        g[0] = np.sqrt(law.level) * (1.0 - cfg.ic_margin)
        F[1:, lay.x(0)] = R
        g[1:] = -R @ x_meas
        prog.add_soc(F, g)
    else:
        row = np.zeros((n, lay.size))
        row[:, lay.x(0)] = np.eye(n)
        prog.add_eq(row, x_meas)

    G = control_point_maps(n, cfg.T)  # xi_j = G[j] @ [x_k; x_{k+1}]
    Lt, lt = cfg.tightened.L, cfg.tightened.ell
    for k in range(N):
        cols = np.r_[np.arange(lay.x(k).start, lay.x(k).stop), np.arange(lay.x(k + 1).start, lay.x(k + 1).stop)]
        for i in range(2 * n):
            # zeta_i = Z @ [x_k; x_{k+1}]
            Z = G[:n, i, :]
            zeta = np.zeros((n, lay.size))
            zeta[:, cols] = Z
            prog.add_le(Lt @ zeta, lt)
            # ||zeta_i - xbar_k|| <= s_k1
            F = np.zeros((n + 1, lay.size))
            F[0, lay.s(k).start] = 1.0
            F[1:] = zeta
            prog.add_soc(F, np.r_[0.0, -anchors[k]])
            # |xi_{n,i} - f(xbar_k)| <= s_k2
            top = np.zeros((2, lay.size))
            top[0, lay.s(k).start + 1] = 1.0
            top[1, cols] = G[n, i, :]
            prog.add_soc(top, np.array([0.0, -f_anchor[k]]))
        block = soc_reformulate(cfg.bounds, anchors[k])
        Fb, gb = block.cone_rows()
        F = np.zeros((Fb.shape[0], lay.size))
        F[:, lay.s(k)] = Fb[:, :2]
        F[:, lay.sig(k)] = Fb[:, 2]
        prog.add_soc(F, gb)
        a, rhs = block.linear_row()
        row = np.zeros(lay.size)
        row[lay.s(k)] = a[:2]
        row[lay.sig(k)] = a[2]
        prog.add_le(row, rhs)
        prog.add_nonneg(np.arange(lay.s(k).start, lay.s(k).stop))
    return prog


def extract(result, cfg, check_tol=1e-6):
    """De-flatten an Optimal result into knots, inputs, slacks and control points."""
    if result.status is not Status.OPTIMAL:
        raise PreconditionError(f"cannot extract a plan from a {result.status.value} solve")
    n, N = cfg.n, cfg.N
    lay = Layout(n, N)
    x = result.x
    knots = np.array([x[lay.x(k)] for k in range(N + 1)])
    inputs = np.array([x[lay.u(k)] for k in range(N)])
    slacks = np.array([x[lay.s(k)] for k in range(N)])
    G = control_point_maps(n, cfg.T)
    cps = np.array([G[0] @ np.concatenate([knots[k], knots[k + 1]]) for k in range(N)])
    # xi_0 must reproduce the knots through the boundary conditions
    for k in range(N):
        seg_start = (G[:n, 0, :] @ np.concatenate([knots[k], knots[k + 1]]))
        if np.max(np.abs(seg_start - knots[k])) > check_tol:
            raise InternalError("control points do not reproduce the planned knots")
    return FtocpSolution(knots=knots, inputs=inputs, slacks=slacks, control_points=cps,
                         status=result.status, objective=result.objective, iterations=result.iterations,
                         diagnostics={"r_prim": result.r_prim, "r_dual": result.r_dual, "gap": result.gap})
