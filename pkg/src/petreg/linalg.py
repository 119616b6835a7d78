"""Small dense linear algebra used throughout the package.

Matrices are plain 2-D ``float`` numpy arrays and column vectors are 1-D
arrays.  Everything here is a pure function of its arguments.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import DimensionError, DivergenceError, InputError, NoSolutionError, NumericalError

RESIDUAL_TOL = 1e-10
SYMMETRY_TOL = 1e-12
SKEW_TOL = 1e-12
HURWITZ_TOL = 1e-10

# Taylor order used once the scaled argument has 1-norm <= 1/2.  The
# truncation error is below 0.5**19 / 19! ~ 1e-23 relative.
_TAYLOR_ORDER = 18
_SCALED_NORM = 0.5


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=float, ndmin=2)
    if m.ndim != 2 or m.size == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} has non-finite entries")
    return m


def as_colvec(v, name: str = "vector") -> np.ndarray:
    x = np.array(v, dtype=float).reshape(-1)
    if x.size == 0:
        raise DimensionError(f"{name} must have at least one entry")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} has non-finite entries")
    return x


def _require_square(a: np.ndarray, name: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")


def expm(a, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{A t}`` by scaling and squaring.

    The argument ``A t`` is scaled by ``2**-s`` until its 1-norm is at most
    1/2, the exponential of the scaled matrix is summed as a truncated
    Taylor series (Horner form), and the result is squared ``s`` times.
    """
    a = as_matrix(a, "A")
    _require_square(a, "A")
    if not math.isfinite(t):
        raise InputError("t must be finite")
    x = a * t
    n = x.shape[0]
    norm = np.abs(x).sum(axis=0).max()
    s = 0
    if norm > _SCALED_NORM:
        s = int(math.ceil(math.log2(norm / _SCALED_NORM)))
        x = x / (2.0**s)
    ident = np.eye(n)
    result = ident.copy()
    for k in range(_TAYLOR_ORDER, 0, -1):
        result = ident + (x @ result) / k
    for _ in range(s):
        result = result @ result
    return result


def solve_lyapunov_2I(h) -> np.ndarray:
    """Solve ``P H + H^T P = 2 I`` for symmetric positive-definite ``P``.

    ``-H`` must be Hurwitz.  The equation is vectorised (column-major
    ``vec``) into ``(H^T (x) I + I (x) H^T) vec(P) = vec(2 I)``.
    """
    h = as_matrix(h, "H")
    _require_square(h, "H")
    if not is_hurwitz(-h):
        raise NoSolutionError("-H is not Hurwitz; PH + H^T P = 2I has no positive-definite solution")
    n = h.shape[0]
    ident = np.eye(n)
    kron = np.kron(h.T, ident) + np.kron(ident, h.T)
    rhs = (2.0 * ident).reshape(-1, order="F")
    try:
        vec_p = np.linalg.solve(kron, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular Kronecker system: {exc}") from exc
    p = vec_p.reshape((n, n), order="F")
    p = 0.5 * (p + p.T)
    if not is_positive_definite(p):
        raise NumericalError("Lyapunov solution is not positive definite")
    return p


def solve_sylvester(psi, m, n_vec, gamma) -> np.ndarray:
    """Solve ``T Psi - M T = N Gamma`` for ``T``.

    ``N`` is a column vector and ``Gamma`` a row vector, so the right-hand
    side is their outer product.  The spectra of ``Psi`` and ``M`` must be
    disjoint (guaranteed when ``M`` is Hurwitz and ``Psi`` has its roots on
    the imaginary axis).
    """
    psi = as_matrix(psi, "Psi")
    m = as_matrix(m, "M")
    _require_square(psi, "Psi")
    _require_square(m, "M")
    nv = as_colvec(n_vec, "N")
    g = as_colvec(gamma, "Gamma")
    rows, cols = m.shape[0], psi.shape[0]
    if nv.size != rows or g.size != cols:
        raise DimensionError(
            f"N must have {rows} entries and Gamma {cols}, got {nv.size} and {g.size}"
        )
    kron = np.kron(psi.T, np.eye(rows)) - np.kron(np.eye(cols), m)
    rhs = np.outer(nv, g).reshape(-1, order="F")
    if np.linalg.cond(kron) > 1e13:
        raise NoSolutionError("spectra of Psi and M overlap; Sylvester system is singular")
    vec_t = np.linalg.solve(kron, rhs)
    t_mat = vec_t.reshape((rows, cols), order="F")
    if rows == cols and np.linalg.matrix_rank(t_mat) < rows:
        raise NumericalError("Sylvester solution T is singular")
    return t_mat


def sylvester_residual(t_mat, psi, m, n_vec, gamma) -> float:
    return float(np.linalg.norm(t_mat @ psi - m @ t_mat - np.outer(n_vec, gamma), "fro"))


def eigenvalues(a) -> np.ndarray:
    a = as_matrix(a, "matrix")
    _require_square(a, "matrix")
    return np.linalg.eigvals(a)


def is_hurwitz(m, tol: float = HURWITZ_TOL) -> bool:
    """True iff every eigenvalue of ``m`` has real part below ``-tol * max(1, ||m||_1)``.

    The margin keeps eigenvalues that are exactly zero in exact arithmetic
    (a Laplacian block of unreachable nodes, say) from passing on rounding.
    """
    m = as_matrix(m, "M")
    scale = max(1.0, float(np.abs(m).sum(axis=0).max())) if m.size else 1.0
    return bool(np.max(eigenvalues(m).real) < -tol * scale)


def is_skew_symmetric(a, tol: float = SKEW_TOL) -> bool:
    a = as_matrix(a, "A")
    _require_square(a, "A")
    return bool(np.max(np.abs(a + a.T)) <= tol)


def is_positive_definite(p) -> bool:
    p = as_matrix(p, "P")
    _require_square(p, "P")
    if np.max(np.abs(p - p.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(p))):
        return False
    try:
        np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        return False
    return True


def is_controllable(m, n_vec) -> bool:
    m = as_matrix(m, "M")
    _require_square(m, "M")
    b = as_colvec(n_vec, "N").reshape(-1, 1)
    cols = [b]
    for _ in range(m.shape[0] - 1):
        cols.append(m @ cols[-1])
    return bool(np.linalg.matrix_rank(np.hstack(cols)) == m.shape[0])


def is_hurwitz_poly(coeffs) -> bool:
    """Hurwitz test for the monic polynomial ``s^n + c1 s^{n-1} + ... + cn``."""
    c = as_colvec(coeffs, "coefficients")
    if np.any(c <= 0.0):
        return False
    # Routh array: every first-column entry must be strictly positive.  Unlike
    # root finding this rejects roots on the imaginary axis exactly.
    poly = np.concatenate(([1.0], c))
    width = (poly.size + 1) // 2
    prev = np.zeros(width)
    cur = np.zeros(width)
    prev[: poly[0::2].size] = poly[0::2]
    cur[: poly[1::2].size] = poly[1::2]
    for _ in range(c.size - 1):
        if cur[0] <= 0.0:
            return False
        nxt = np.zeros(width)
        nxt[:-1] = (cur[0] * prev[1:] - prev[0] * cur[1:]) / cur[0]
        prev, cur = cur, nxt
    return bool(cur[0] > 0.0)


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], x: np.ndarray, t: float, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``x' = f(t, x)``."""
    if not h > 0.0:
        raise InputError("step size must be positive")
    half = 0.5 * h
    k1 = f(t, x)
    k2 = f(t + half, x + half * k1)
    k3 = f(t + half, x + half * k2)
    k4 = f(t + h, x + h * k3)
    out = x + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite state after RK4 step at t={t:.6g}", t=t)
    return out
