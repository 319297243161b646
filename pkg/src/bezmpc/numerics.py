"""Dense small-matrix primitives used throughout the package.

Everything here works on plain ``numpy`` arrays. The matrices involved are
tiny (state dimension at most a handful), so the routines favour simple,
exact constructions over asymptotically fast ones.
"""

import numpy as np

from .errors import InvalidInputError, NumericalError, PreconditionError

__all__ = [
    "mat_exp",
    "solve_lyapunov",
    "psd_project_2x2",
    "cholesky_2x2",
    "ellipsoid_support",
    "symmetrize",
]

SYM_TOL = 1e-9

# Degree-6 diagonal Pade coefficients for exp: c_k = (12-k)! 6! / (12! k! (6-k)!)
_PADE6 = np.array([1.0, 1.0 / 2, 5.0 / 44, 1.0 / 66, 1.0 / 792, 1.0 / 15840, 1.0 / 665280])


def _as_square(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def symmetrize(M, name="M", tol=SYM_TOL):
    """Return ``(M + M.T) / 2`` after checking the asymmetry is below ``tol``."""
    M = _as_square(M, name)
    if np.max(np.abs(M - M.T)) > tol:
        raise InvalidInputError(f"{name} is not symmetric (tolerance {tol})")
    return 0.5 * (M + M.T)


def mat_exp(M):
    """Matrix exponential by scaling and squaring with a degree-6 Pade core.

    The squaring count is chosen from the 1-norm so that the scaled matrix
    has norm at most 1/2, where the [6/6] approximant is accurate to well
    below machine precision.
    """
    M = _as_square(M)
    norm = np.linalg.norm(M, 1)
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    A = M / (2.0**s)
    n = A.shape[0]
    ident = np.eye(n)
    powers = [ident, A]
    for _ in range(5):
        powers.append(powers[-1] @ A)
    even = sum(_PADE6[k] * powers[k] for k in range(0, 7, 2))
    odd = sum(_PADE6[k] * powers[k] for k in range(1, 7, 2))
    E = np.linalg.solve(even - odd, even + odd)
    for _ in range(s):
        E = E @ E
    return E


def solve_lyapunov(F, Q):
    """Solve ``F.T @ P + P @ F = -Q`` for symmetric positive definite ``P``.

    Uses the vectorized Kronecker form, which is fine for the small
    dimensions this package deals with.
    """
    F = _as_square(F, "F")
    Q = symmetrize(Q, "Q")
    n = F.shape[0]
    if Q.shape != F.shape:
        raise InvalidInputError("F and Q must have the same shape")
    if np.any(np.linalg.eigvals(F).real >= 0.0):
        raise PreconditionError("F is not Hurwitz")
    if np.min(np.linalg.eigvalsh(Q)) <= 0.0:
        raise PreconditionError("Q is not positive definite")
    ident = np.eye(n)
    # row-major vec: vec(F.T P) = kron(F.T, I) vec(P), vec(P F) = kron(I, F.T) vec(P)
    K = np.kron(F.T, ident) + np.kron(ident, F.T)
    if np.linalg.cond(K) > 1e14:
        raise NumericalError("Kronecker system for the Lyapunov equation is singular")
    P = np.linalg.solve(K, -Q.reshape(-1)).reshape(n, n)
    return 0.5 * (P + P.T)


def psd_project_2x2(M):
    """Project a symmetric 2x2 matrix onto the PSD cone.

    Returns ``(M_psd, lam, v)``. For an indefinite input, ``lam`` is the
    positive eigenvalue and ``v`` its unit eigenvector with nonnegative
    components, and ``M_psd = lam * v v^T``. PSD inputs come back unchanged
    with ``lam`` the largest eigenvalue. A negative semidefinite input maps
    to the zero matrix.
    """
    M = symmetrize(M)
    if M.shape != (2, 2):
        raise InvalidInputError("psd_project_2x2 needs a 2x2 matrix")
    scale = np.max(np.abs(M))
    if scale == 0.0:
        return M, 0.0, np.array([1.0, 0.0])
    # eigenvector from the scaled matrix so tiny entries cannot underflow
    a, b, d = M[0, 0] / scale, M[0, 1] / scale, M[1, 1] / scale
    mean = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    lam1, lam2 = mean + rad, mean - rad
    if b == 0.0:
        v = np.array([1.0, 0.0]) if a >= d else np.array([0.0, 1.0])
    elif abs(lam1 - a) > abs(lam1 - d):
        v = np.array([b, lam1 - a])
    else:
        v = np.array([lam1 - d, b])
    v = v / np.max(np.abs(v))  # avoid underflow in the norm
    v = v / np.linalg.norm(v)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    lam1, lam2 = lam1 * scale, lam2 * scale
    if lam2 >= 0.0:
        return M, lam1, v
    if lam1 <= 0.0:
        return np.zeros((2, 2)), 0.0, v
    return lam1 * np.outer(v, v), lam1, v


def cholesky_2x2(M, tol=1e-12):
    """Lower-triangular factor ``L`` with ``L @ L.T == M`` for PSD 2x2 ``M``.

    Singular (rank-1 or zero) inputs are accepted: the zero pivot is
    replaced by an exact zero column.
    """
    M = symmetrize(M)
    if M.shape != (2, 2):
        raise InvalidInputError("cholesky_2x2 needs a 2x2 matrix")
    scale = max(np.max(np.abs(M)), 1.0)
    a, b, d = M[0, 0], M[0, 1], M[1, 1]
    if a < -tol * scale:
        raise NumericalError("matrix is not positive semidefinite")
    L = np.zeros((2, 2))
    if a > tol * scale:
        L[0, 0] = np.sqrt(a)
        L[1, 0] = b / L[0, 0]
        rem = d - L[1, 0] ** 2
    else:
        if abs(b) > tol * scale:
            raise NumericalError("matrix is not positive semidefinite")
        rem = d
    if rem < -tol * scale:
        raise NumericalError("matrix is not positive semidefinite")
    L[1, 1] = np.sqrt(max(rem, 0.0))
    return L


def ellipsoid_support(L, P, level):
    """Support function of ``{v : v^T P v <= level}`` in direction ``L``.

    Equals ``sqrt(level * L^T P^{-1} L)``.
    """
    P = symmetrize(P, "P")
    L = np.asarray(L, dtype=float).reshape(-1)
    if level < 0:
        raise PreconditionError("level must be nonnegative")
    try:
        C = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise PreconditionError("P is not positive definite") from None
    y = np.linalg.solve(C, L)
    return float(np.sqrt(level * (y @ y)))
