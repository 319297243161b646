"""Integrator-chain control-affine systems, disturbances, and discretization.

The state obeys ``x_i' = x_{i+1}`` for ``i < n`` and
``x_n' = f(x) + g(x) u`` plus an additive disturbance on every channel.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .numerics import mat_exp

__all__ = [
    "SystemModel",
    "sincube_system",
    "double_integrator",
    "DisturbanceSignal",
    "DiscreteLinearization",
    "TrajectoryLog",
    "continuous_linearization",
    "exact_discretization",
    "linearize_discretize",
    "rk4_step",
    "integrate_closed_loop",
]


@dataclass(frozen=True)
class SystemModel:
    """Scalar drift ``f`` and input gain ``g`` acting on the last channel."""

    n: int
    f: Callable[[np.ndarray], float]
    g: Callable[[np.ndarray], float]
    df_dx: Callable[[np.ndarray], np.ndarray]
    dg_dx: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def drift(self, x):
        dx = np.empty(self.n)
        dx[:-1] = x[1:]
        dx[-1] = self.f(x)
        return dx

    def input_vector(self, x):
        b = np.zeros(self.n)
        b[-1] = self.g(x)
        return b

    def vector_field(self, x, u):
        dx = np.empty(self.n)
        dx[:-1] = x[1:]
        dx[-1] = self.f(x) + self.g(x) * u
        return dx

    def check_gain(self, samples, g_min=1e-8):
        """Smallest ``|g|`` over ``samples``; raises if it drops below ``g_min``."""
        gmin = min(abs(self.g(np.asarray(x, dtype=float))) for x in samples)
        if gmin < g_min:
            raise InvalidInputError(f"|g| = {gmin:.3g} below {g_min} on the sampled set")
        return gmin


def sincube_system():
    """``x1' = x2``, ``x2' = sin(x1) + x2^3 + u``."""
    return SystemModel(
        n=2,
        f=lambda x: float(np.sin(x[0]) + x[1] ** 3),
        g=lambda x: 1.0,
        df_dx=lambda x: np.array([np.cos(x[0]), 3.0 * x[1] ** 2]),
        dg_dx=lambda x: np.zeros(2),
        name="paper_sincube",
    )


def double_integrator(n=2):
    """Chain of ``n`` integrators with unit input gain."""
    return SystemModel(
        n=n,
        f=lambda x: 0.0,
        g=lambda x: 1.0,
        df_dx=lambda x: np.zeros(n),
        dg_dx=lambda x: np.zeros(n),
        name="double_integrator" if n == 2 else f"integrator_chain_{n}",
    )


@dataclass
class DisturbanceSignal:
    """Additive disturbance with ``||w(t)||_2 <= wbar`` enforced by radial clipping.

    ``sinusoid`` uses per-channel sines of amplitude ``wbar``;
    ``uniform`` draws a fresh uniform vector in the ``wbar`` box every
    ``hold`` seconds from a seeded generator.
    """

    kind: str
    wbar: float
    n: int
    seed: int = 0
    frequencies: Optional[tuple] = None
    phases: Optional[tuple] = None
    hold: float = 0.01
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("zero", "sinusoid", "uniform"):
            raise InvalidInputError(f"unknown disturbance kind {self.kind!r}")
        if self.wbar < 0:
            raise InvalidInputError("wbar must be nonnegative")
        if self.kind == "sinusoid":
            if self.frequencies is None:
                # irrational ratios between channels
                self.frequencies = tuple(2.0 * np.sqrt(k + 2.0) for k in range(self.n))
            if self.phases is None:
                self.phases = tuple(0.7 * k for k in range(self.n))
            if len(self.frequencies) != self.n or len(self.phases) != self.n:
                raise InvalidInputError("need one frequency and phase per state channel")
        if self.kind == "uniform":
            self._rng = np.random.default_rng(self.seed)

    def _uniform_block(self, idx):
        # blocks are generated in order so the realization depends only on the seed
        while len(self._cache) <= idx:
            self._cache[len(self._cache)] = self._rng.uniform(-1.0, 1.0, self.n)
        return self._cache[idx]

    def __call__(self, t):
        if self.kind == "zero" or self.wbar == 0.0:
            return np.zeros(self.n)
        if self.kind == "sinusoid":
            raw = self.wbar * np.sin(np.asarray(self.frequencies) * t + np.asarray(self.phases))
        else:
            raw = self.wbar * self._uniform_block(int(np.floor(max(t, 0.0) / self.hold)))
        norm = np.linalg.norm(raw)
        if norm > self.wbar:
            raw = raw * (self.wbar / norm)
        return raw


@dataclass(frozen=True)
class DiscreteLinearization:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    x_bar: np.ndarray
    u_bar: float
    T: float

    def step(self, x, u):
        return self.A @ x + self.B * u + self.C


def continuous_linearization(sys, x_bar, u_bar):
    """Jacobian linearization ``(A_c, B_c, C_c)`` about ``(x_bar, u_bar)``."""
    x_bar = np.asarray(x_bar, dtype=float).reshape(-1)
    n = sys.n
    Ac = np.zeros((n, n))
    Ac[:-1, 1:] = np.eye(n - 1)
    Ac[-1, :] = sys.df_dx(x_bar) + sys.dg_dx(x_bar) * u_bar
    Bc = sys.input_vector(x_bar)
    Cc = sys.vector_field(x_bar, u_bar) - Ac @ x_bar - Bc * u_bar
    return Ac, Bc, Cc


def exact_discretization(Ac, Bc, Cc, T, x_bar=None, u_bar=0.0):
    """Zero-order-hold discretization over ``T`` via one augmented exponential."""
    if T <= 0:
        raise InvalidInputError("T must be positive")
    Ac = np.asarray(Ac, dtype=float)
    n = Ac.shape[0]
    aug = np.zeros((n + 2, n + 2))
    aug[:n, :n] = Ac
    aug[:n, n] = np.asarray(Bc, dtype=float).reshape(-1)
    aug[:n, n + 1] = np.asarray(Cc, dtype=float).reshape(-1)
    E = mat_exp(aug * T)
    if x_bar is None:
        x_bar = np.zeros(n)
    return DiscreteLinearization(
        A=E[:n, :n], B=E[:n, n].copy(), C=E[:n, n + 1].copy(),
        x_bar=np.asarray(x_bar, dtype=float).copy(), u_bar=float(u_bar), T=float(T),
    )


def linearize_discretize(sys, x_bar, u_bar, T):
    Ac, Bc, Cc = continuous_linearization(sys, x_bar, u_bar)
    return exact_discretization(Ac, Bc, Cc, T, x_bar=x_bar, u_bar=u_bar)


def rk4_step(rhs, x, t, h):
    k1 = rhs(x, t)
    k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h)
    k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h)
    k4 = rhs(x + h * k3, t + h)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class TrajectoryLog:
    """Column store of a simulated run, one row per logged sample."""

    n: int
    t: list = field(default_factory=list)
    x: list = field(default_factory=list)
    u: list = field(default_factory=list)
    xd: list = field(default_factory=list)
    V: list = field(default_factory=list)
    state_ok: list = field(default_factory=list)
    input_ok: list = field(default_factory=list)
    planner_feasible: list = field(default_factory=list)
    fallback_used: list = field(default_factory=list)
    aborted: Optional[str] = None

    def append(self, t, x, u, xd=None, V=float("nan"), state_ok=True, input_ok=True,
               planner_feasible=True, fallback_used=False):
        self.t.append(float(t))
        self.x.append(np.array(x, dtype=float))
        self.u.append(float(u))
        self.xd.append(np.full(self.n, np.nan) if xd is None else np.array(xd, dtype=float))
        self.V.append(float(V))
        self.state_ok.append(bool(state_ok))
        self.input_ok.append(bool(input_ok))
        self.planner_feasible.append(bool(planner_feasible))
        self.fallback_used.append(bool(fallback_used))

    def __len__(self):
        return len(self.t)

    def arrays(self):
        return {
            "t": np.array(self.t),
            "x": np.array(self.x).reshape(-1, self.n),
            "u": np.array(self.u),
            "xd": np.array(self.xd).reshape(-1, self.n),
            "V": np.array(self.V),
            "state_ok": np.array(self.state_ok),
            "input_ok": np.array(self.input_ok),
            "planner_feasible": np.array(self.planner_feasible),
            "fallback_used": np.array(self.fallback_used),
        }


def integrate_closed_loop(sys, controller, x0, w, t0, t1, dt, log=None, annotate=None):
    """Fixed-step RK4 of ``x' = f(x) + g(x) k(x, t) + w(t)`` over ``[t0, t1]``.

    ``controller(x, t)`` is re-evaluated at every RK4 stage. One sample is
    logged per step at the start of the step; the final state is returned
    but not logged, so consecutive calls can share a log. ``annotate(t, x, u)``
    may return extra keyword fields for the log row.
    """
    steps = int(round((t1 - t0) / dt))
    if steps < 1 or abs(steps * dt - (t1 - t0)) > 1e-9 * max(1.0, abs(t1 - t0)):
        raise InvalidInputError("dt must divide the integration span")
    if log is None:
        log = TrajectoryLog(n=sys.n)
    x = np.array(x0, dtype=float)

    def rhs(xs, ts):
        u = controller(xs, ts)
        if not np.isfinite(u):
            raise FloatingPointError(f"controller returned non-finite input at t={ts}")
        return sys.vector_field(xs, u) + w(ts)

    for j in range(steps):
        t = t0 + j * dt
        u = controller(x, t)
        if not np.isfinite(u):
            log.aborted = f"non-finite input at t={t}"
            break
        extra = annotate(t, x, u) if annotate is not None else {}
        log.append(t, x, u, **extra)
        try:
            # overflow of a diverging run is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                x = rk4_step(rhs, x, t, dt)
        except FloatingPointError as exc:
            log.aborted = str(exc)
            break
        if not np.all(np.isfinite(x)):
            log.aborted = f"state diverged at t={t + dt}"
            break
    return x, log
