"""Small dense convex cone programs and an operator-splitting solver.

Programs have the form::

    minimize    x^T P x / 2 + q^T x
    subject to  s = b - A x,  s in K

where ``K`` is a product of the zero cone (equalities), the nonnegative
orthant and second-order cones ``{(t, u) : ||u|| <= t}``. Constraints are
collected through :class:`ConicProgram` and solved with an ADMM iteration
on the split ``z = A x in b - K`` (OSQP style, generalized to cones) with
Ruiz equilibration and adaptive step size.
"""

import enum
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidInputError

__all__ = [
    "ConicProgram",
    "SolveResult",
    "Status",
    "Tolerances",
    "project_soc",
    "solve",
    "dump_program",
    "load_program",
]


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class Tolerances:
    eps_abs: float = 1e-7
    eps_rel: float = 1e-7
    eps_pinf: float = 1e-7
    # consecutive certificate confirmations, one per check interval
    pinf_sustain: int = 10
    check_every: int = 10


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray
    y: np.ndarray
    objective: float
    r_prim: float
    r_dual: float
    gap: float
    iterations: int
    z: np.ndarray = field(default=None, repr=False)

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


def project_soc(v):
    """Euclidean projection of ``(t, u)`` onto ``{||u|| <= t}``."""
    v = np.asarray(v, dtype=float)
    t, u = v[0], v[1:]
    nu = np.linalg.norm(u)
    if nu <= t:
        return v.copy()
    if nu <= -t:
        return np.zeros_like(v)
    a = 0.5 * (nu + t)
    out = np.empty_like(v)
    out[0] = a
    out[1:] = a * u / nu
    return out


def _project_soc_batch(V):
    """Row-wise SOC projection of a ``(count, d)`` array."""
    t = V[:, 0]
    nu = np.linalg.norm(V[:, 1:], axis=1)
    out = V.copy()
    outside = nu > t
    polar = outside & (nu <= -t)
    mid = outside & ~polar
    out[polar] = 0.0
    if np.any(mid):
        a = 0.5 * (nu[mid] + t[mid])
        out[mid, 0] = a
        out[mid, 1:] = V[mid, 1:] * (a / nu[mid])[:, None]
    return out


class ConicProgram:
    """Container for a convex program over ``n_var`` scalar variables."""

    def __init__(self, n_var):
        if n_var < 1:
            raise InvalidInputError("program needs at least one variable")
        self.n_var = int(n_var)
        self.P = np.zeros((n_var, n_var))
        self.q = np.zeros(n_var)
        self._eq_A, self._eq_b = [], []
        self._le_A, self._le_b = [], []
        self._soc = []
        self.nonneg = set()
        self.names = {}

    # building ---------------------------------------------------------
    def _row(self, a):
        a = np.asarray(a, dtype=float)
        if a.ndim == 1:
            a = a[None, :]
        if a.shape[1] != self.n_var:
            raise InvalidInputError(f"row width {a.shape[1]} != {self.n_var} variables")
        return a

    def add_quadratic(self, P, q=None):
        P = np.asarray(P, dtype=float)
        if P.shape != (self.n_var, self.n_var):
            raise InvalidInputError("objective matrix has the wrong shape")
        self.P = self.P + 0.5 * (P + P.T)
        if q is not None:
            self.q = self.q + np.asarray(q, dtype=float).reshape(-1)

    def add_eq(self, A, b):
        A = self._row(A)
        self._eq_A.append(A)
        self._eq_b.append(np.atleast_1d(np.asarray(b, dtype=float)).reshape(A.shape[0]))

    def add_le(self, A, b):
        A = self._row(A)
        self._le_A.append(A)
        self._le_b.append(np.atleast_1d(np.asarray(b, dtype=float)).reshape(A.shape[0]))

    def add_soc(self, F, g):
        """Require ``F @ x + g`` (first entry = cone height) to lie in the SOC."""
        F = self._row(F)
        g = np.asarray(g, dtype=float).reshape(-1)
        if F.shape[0] < 1 or g.size != F.shape[0]:
            raise InvalidInputError("malformed second-order cone")
        self._soc.append((F, g))

    def add_nonneg(self, idx):
        for i in np.atleast_1d(idx):
            if not 0 <= int(i) < self.n_var:
                raise InvalidInputError(f"variable index {i} out of range")
            self.nonneg.add(int(i))

    # views ------------------------------------------------------------
    @property
    def n_eq(self):
        return sum(a.shape[0] for a in self._eq_A)

    @property
    def n_le(self):
        return sum(a.shape[0] for a in self._le_A)

    @property
    def soc_dims(self):
        return [F.shape[0] for F, _ in self._soc]

    def standard_form(self):
        """Stacked ``(A, b, cones)`` with ``b - A x in K``.

        ``cones`` lists ``("zero", m)``, ``("nonneg", m)`` then one
        ``("soc", d)`` per cone, in row order.
        """
        rows_A, rows_b, cones = [], [], []
        if self._eq_A:
            rows_A.append(np.vstack(self._eq_A))
            rows_b.append(np.concatenate(self._eq_b))
            cones.append(("zero", rows_A[-1].shape[0]))
        le_A = list(self._le_A)
        le_b = list(self._le_b)
        if self.nonneg:
            idx = sorted(self.nonneg)
            E = np.zeros((len(idx), self.n_var))
            E[np.arange(len(idx)), idx] = -1.0
            le_A.append(E)
            le_b.append(np.zeros(len(idx)))
        if le_A:
            rows_A.append(np.vstack(le_A))
            rows_b.append(np.concatenate(le_b))
            cones.append(("nonneg", rows_A[-1].shape[0]))
        for F, g in self._soc:
            rows_A.append(-F)
            rows_b.append(g)
            cones.append(("soc", F.shape[0]))
        if not rows_A:
            return np.zeros((0, self.n_var)), np.zeros(0), []
        return np.vstack(rows_A), np.concatenate(rows_b), cones

    def validate(self):
        if not np.all(np.isfinite(self.P)) or not np.all(np.isfinite(self.q)):
            raise InvalidInputError("objective has non-finite entries")
        ev = np.linalg.eigvalsh(self.P)
        if ev.size and ev[0] < -1e-9 * max(1.0, abs(ev[-1])):
            raise InvalidInputError("objective matrix is not positive semidefinite")
        A, b, _ = self.standard_form()
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidInputError("constraints have non-finite entries")

    def objective(self, x):
        return float(0.5 * x @ self.P @ x + self.q @ x)


class _Cones:
    """Precomputed index structure for projecting onto ``b - K``."""

    def __init__(self, cones, m):
        self.zero = np.zeros(m, dtype=bool)
        self.nonneg = np.zeros(m, dtype=bool)
        self.soc_groups = {}
        self.soc_blocks = []
        row = 0
        for kind, d in cones:
            if kind == "zero":
                self.zero[row:row + d] = True
            elif kind == "nonneg":
                self.nonneg[row:row + d] = True
            else:
                self.soc_groups.setdefault(d, []).append(np.arange(row, row + d))
                self.soc_blocks.append((row, d))
            row += d
        self.soc_groups = {d: np.array(ix) for d, ix in self.soc_groups.items()}

    def project_K(self, s):
        out = s.copy()
        out[self.zero] = 0.0
        out[self.nonneg] = np.maximum(s[self.nonneg], 0.0)
        for ix in self.soc_groups.values():
            out[ix] = _project_soc_batch(s[ix])
        return out

    def dist_dual(self, y):
        """Distance from ``y`` to the dual cone ``K*``."""
        d2 = np.sum(np.minimum(y[self.nonneg], 0.0) ** 2)
        for ix in self.soc_groups.values():
            V = y[ix]
            d2 += np.sum((V - _project_soc_batch(V)) ** 2)
        return float(np.sqrt(d2))


def _ruiz(P, A, cones, iters=10):
    n = P.shape[0]
    m = A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, As = P.copy(), A.copy()
    for _ in range(iters):
        col = np.maximum(np.max(np.abs(Ps), axis=0), np.max(np.abs(As), axis=0) if m else 0.0)
        dD = 1.0 / np.sqrt(np.clip(np.where(col < 1e-4, 1.0, col), 1e-4, 1e4))
        row = np.max(np.abs(As), axis=1) if m else np.zeros(0)
        # a cone needs one scale for all its rows; use the block's largest row
        for r0, d in cones.soc_blocks:
            row[r0:r0 + d] = np.max(row[r0:r0 + d])
        dE = 1.0 / np.sqrt(np.clip(np.where(row < 1e-4, 1.0, row), 1e-4, 1e4))
        Ps = dD[:, None] * Ps * dD[None, :]
        As = dE[:, None] * As * dD[None, :]
        D *= dD
        E *= dE
    return D, E


def solve(program, tol=None, max_iter=50_000, warm_start=None, rho=0.03, sigma=1e-6, alpha=1.6,
          adaptive_every=100):
    """Solve ``program``; returns a :class:`SolveResult`.

    ``warm_start`` may be a previous :class:`SolveResult` or a ``(x, y)``
    pair in the unscaled variables of a program of identical shape.
    """
    tol = tol or Tolerances()
    program.validate()
    P0 = program.P
    q0 = program.q
    A0, b0, cone_list = program.standard_form()
    n, m = program.n_var, A0.shape[0]
    cones = _Cones(cone_list, m)

    D, E = _ruiz(P0, A0, cones)
    P = D[:, None] * P0 * D[None, :]
    q = D * q0
    A = E[:, None] * A0 * D[None, :]
    b = E * b0
    c = 1.0 / max(np.mean(np.max(np.abs(P), axis=0)), np.max(np.abs(q), initial=0.0), 1e-4)
    c = min(c, 1e4)
    P *= c
    q *= c

    def proj_C(v):
        return b - cones.project_K(b - v)

    x = np.zeros(n)
    y = np.zeros(m)
    if warm_start is not None:
        wx, wy = (warm_start.x, warm_start.y) if isinstance(warm_start, SolveResult) else warm_start
        if wx is not None and len(wx) == n:
            x = np.asarray(wx, dtype=float) / D
        if wy is not None and len(wy) == m:
            y = c * np.asarray(wy, dtype=float) / E
    z = proj_C(A @ x)

    rho_vec = np.where(cones.zero, 1e3 * rho, rho)
    I_sigma = sigma * np.eye(n)

    def factor(rv):
        return cho_factor(P + I_sigma + A.T @ (rv[:, None] * A))

    kkt = factor(rho_vec)
    Dinv, Einv = 1.0 / D, 1.0 / E
    pinf_count = 0
    status = Status.ITERATION_LIMIT
    y_prev = y.copy()
    it = 0
    r_p = r_d = np.inf
    for it in range(1, max_iter + 1):
        rhs = sigma * x - q + A.T @ (rho_vec * z - y)
        xt = cho_solve(kkt, rhs)
        zt = A @ xt
        x = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        y_prev = y
        z = proj_C(zr + y / rho_vec)
        y = y + rho_vec * (zr - z)

        if it % tol.check_every and it != max_iter:
            continue
        Ax = A @ x
        Px = P @ x
        ATy = A.T @ y
        r_p = np.max(np.abs(Einv * (Ax - z)), initial=0.0)
        r_d = np.max(np.abs(Dinv * (Px + q + ATy))) / c
        eps_p = tol.eps_abs + tol.eps_rel * max(np.max(np.abs(Einv * Ax), initial=0.0),
                                                 np.max(np.abs(Einv * z), initial=0.0))
        eps_d = tol.eps_abs + tol.eps_rel * max(np.max(np.abs(Dinv * Px)), np.max(np.abs(Dinv * ATy)),
                                                 np.max(np.abs(Dinv * q))) / c
        if r_p <= eps_p and r_d <= eps_d:
            status = Status.OPTIMAL
            break
        if m:
            dy = E * (y - y_prev) / c
            ndy = np.max(np.abs(dy))
            if ndy > 0:
                cert = (np.max(np.abs(A0.T @ dy)) <= tol.eps_pinf * ndy
                        and b0 @ dy < -tol.eps_pinf * ndy
                        and cones.dist_dual(dy) <= tol.eps_pinf * ndy)
                pinf_count = pinf_count + 1 if cert else 0
                if pinf_count >= tol.pinf_sustain:
                    status = Status.PRIMAL_INFEASIBLE
                    break
        if adaptive_every and it % adaptive_every == 0:
            # residual ratio measured in the equilibrated space
            num = np.max(np.abs(Ax - z), initial=0.0) / max(np.max(np.abs(Ax), initial=0.0),
                                                         np.max(np.abs(z), initial=0.0), 1e-12)
            den = np.max(np.abs(Px + q + ATy)) / max(np.max(np.abs(Px)), np.max(np.abs(ATy)),
                                                    np.max(np.abs(q)), 1e-12)
            if den > 0 and num > 0:
                scale = np.sqrt(num / den)
                new_rho = float(np.clip(rho * scale, 1e-6, 1e6))
                if new_rho > 5 * rho or new_rho < rho / 5:
                    rho = new_rho
                    rho_vec = np.where(cones.zero, 1e3 * rho, rho)
                    kkt = factor(rho_vec)

    x_u = D * x
    y_u = E * y / c
    z_u = Einv * z
    obj = program.objective(x_u)
    gap = abs(float(x_u @ P0 @ x_u + q0 @ x_u + b0 @ y_u)) if m else 0.0
    return SolveResult(status=status, x=x_u, y=y_u, objective=obj, r_prim=float(r_p),
                       r_dual=float(r_d), gap=gap, iterations=it, z=z_u)


def dump_program(program, fh=None):
    """Plain-text dump: dimensions, cone list, objective rows, then constraint rows.

    Format::

        conic-program 1
        <n_var> <n_rows>
        cones <kind>:<dim> ...
        P            (n_var lines of n_var numbers)
        q            (one line)
        A            (n_rows lines: b_i then A_i1 .. A_in)
    """
    A, b, cones = program.standard_form()
    out = fh or io.StringIO()
    out.write("conic-program 1\n")
    out.write(f"{program.n_var} {A.shape[0]}\n")
    out.write("cones " + " ".join(f"{k}:{d}" for k, d in cones) + "\n")
    out.write("P\n")
    for row in program.P:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")
    out.write("q\n" + " ".join(repr(float(v)) for v in program.q) + "\n")
    out.write("A\n")
    for bi, row in zip(b, A):
        out.write(repr(float(bi)) + " " + " ".join(repr(float(v)) for v in row) + "\n")
    if fh is None:
        return out.getvalue()
    return None


def load_program(text):
    """Inverse of :func:`dump_program` (cones are rebuilt in standard form)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines[0].split()[0] != "conic-program":
        raise InvalidInputError("not a conic-program dump")
    n, m = map(int, lines[1].split())
    cones = [(tok.split(":")[0], int(tok.split(":")[1])) for tok in lines[2].split()[1:]]
    P = np.array([[float(v) for v in lines[4 + i].split()] for i in range(n)]).reshape(n, n)
    q = np.array([float(v) for v in lines[5 + n].split()])
    rows = np.array([[float(v) for v in lines[7 + n + i].split()] for i in range(m)]).reshape(m, n + 1)
    b, A = rows[:, 0], rows[:, 1:]
    prog = ConicProgram(n)
    prog.add_quadratic(P, q)
    r = 0
    for kind, d in cones:
        Ab, bb = A[r:r + d], b[r:r + d]
        if kind == "zero":
            prog.add_eq(Ab, bb)
        elif kind == "nonneg":
            prog.add_le(Ab, bb)
        else:
            prog.add_soc(-Ab, bb)
        r += d
    return prog
