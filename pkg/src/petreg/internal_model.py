"""Internal-model compensator ``eta' = M eta + N u``.

``M`` is Hurwitz and ``(M, N)`` controllable.  When the steady-state input
is generated by a known companion matrix ``Psi`` (roots on the imaginary
axis), the output row ``Phi = Gamma T^{-1}`` is obtained from the Sylvester
equation ``T Psi - M T = N Gamma`` with ``Gamma = [1, 0, ..., 0]``.  Then
``M + N Phi = T Psi T^{-1}`` and ``Phi eta`` reproduces the steady-state
control.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .linalg import (
    RESIDUAL_TOL,
    as_colvec,
    as_matrix,
    is_controllable,
    is_hurwitz,
    is_hurwitz_poly,
    solve_sylvester,
    sylvester_residual,
)


def companion_from_poly(coeffs) -> tuple[np.ndarray, np.ndarray]:
    """Companion pair for ``s^n + c1 s^{n-1} + ... + cn``.

    Returns ``M`` with ones on the superdiagonal and last row
    ``(-cn, ..., -c1)``, and ``N = e_n``.  A non-Hurwitz polynomial only
    raises a warning; validation is a separate step.
    """
    c = as_colvec(coeffs, "polynomial coefficients")
    n = c.size
    m = np.zeros((n, n))
    m[:-1, 1:] = np.eye(n - 1)
    m[-1, :] = -c[::-1]
    nv = np.zeros(n)
    nv[-1] = 1.0
    if not is_hurwitz_poly(c):
        warnings.warn(f"polynomial {c.tolist()} is not Hurwitz", RuntimeWarning, stacklevel=2)
    return m, nv


def steady_state_generator(coeffs) -> np.ndarray:
    """``Psi`` such that its characteristic polynomial is the given monic one.

    Same layout as ``companion_from_poly``; no stability check because the
    roots are expected on the imaginary axis.
    """
    c = as_colvec(coeffs, "polynomial coefficients")
    n = c.size
    psi = np.zeros((n, n))
    psi[:-1, 1:] = np.eye(n - 1)
    psi[-1, :] = -c[::-1]
    return psi


@dataclass
class InternalModel:
    M: np.ndarray
    N: np.ndarray
    Phi: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None
    T: Optional[np.ndarray] = None
    Psi: Optional[np.ndarray] = None

    def __post_init__(self):
        self.M = as_matrix(self.M, "M")
        self.N = as_colvec(self.N, "N")
        n = self.M.shape[0]
        if self.M.shape != (n, n) or self.N.size != n:
            raise ConfigError("M must be square and N must match its size")
        if self.Phi is not None:
            self.Phi = as_colvec(self.Phi, "Phi")
            if self.Phi.size != n:
                raise ConfigError(f"Phi must have {n} entries")
        self.eta = np.zeros(n) if self.eta is None else as_colvec(self.eta, "eta")

    @property
    def order(self) -> int:
        return self.M.shape[0]

    @classmethod
    def from_polynomials(cls, m_coeffs, psi_coeffs=None, phi=None) -> "InternalModel":
        """Companion ``(M, N)`` from ``m_coeffs``; ``Phi`` either given or
        computed from the steady-state polynomial ``psi_coeffs``."""
        m, n = companion_from_poly(m_coeffs)
        if phi is not None:
            return cls(m, n, Phi=phi)
        if psi_coeffs is None:
            return cls(m, n)
        psi = steady_state_generator(psi_coeffs)
        if psi.shape != m.shape:
            raise ConfigError("steady-state polynomial must have the same degree as the internal model")
        return cls.from_generator(m, n, psi)

    @classmethod
    def from_generator(cls, m, n_vec, psi) -> "InternalModel":
        m = as_matrix(m, "M")
        psi = as_matrix(psi, "Psi")
        gamma = np.zeros(psi.shape[0])
        gamma[0] = 1.0
        t_mat = solve_sylvester(psi, m, n_vec, gamma)
        res = sylvester_residual(t_mat, psi, m, np.asarray(n_vec, dtype=float), gamma)
        if res >= RESIDUAL_TOL:
            raise ConfigError(f"Sylvester residual {res:.3e} exceeds tolerance")
        phi = np.linalg.solve(t_mat.T, gamma)  # Gamma T^{-1}, as a row
        return cls(m, n_vec, Phi=phi, T=t_mat, Psi=psi)

    def check(self) -> dict[str, bool]:
        return {
            "M Hurwitz": is_hurwitz(self.M),
            "(M, N) controllable": is_controllable(self.M, self.N),
        }

    def output(self, eta: Optional[np.ndarray] = None) -> float:
        if self.Phi is None:
            return 0.0
        return float(self.Phi @ (self.eta if eta is None else eta))


def compensator_rhs(im: InternalModel, drive: float, eta: Optional[np.ndarray] = None) -> np.ndarray:
    e = im.eta if eta is None else eta
    return im.M @ e + im.N * drive
