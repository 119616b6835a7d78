"""Periodic event-triggered distributed observers for the leader state.

Two variants are provided.  In the first every follower knows the leader
matrix ``A`` and only estimates ``nu``.  In the second each follower also
estimates ``A``.  Followers broadcast their estimate only when a trigger,
evaluated on their own sampling grid, fires; neighbours reconstruct the
broadcast value in between with the closed-form prediction
``exp(A_used (t - t_event)) nu_hat(t_event)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CausalityError, ConfigError, DimensionError
from .exosystem import Exosystem
from .linalg import expm, solve_lyapunov_2I


@dataclass(frozen=True)
class ObserverParams:
    mu1: float = 2.0
    mu2: float = 2.0
    iota_A: float = 0.001
    gamma_A: float = 0.1
    iota_nu: float = 0.001
    gamma_nu: float = 0.1

    def __post_init__(self):
        for name in ("mu1", "mu2", "iota_A", "gamma_A", "iota_nu", "gamma_nu"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"observer parameter {name} must be positive")


@dataclass(frozen=True)
class SamplingGrid:
    """Sampling instants ``phase + k * period`` for ``k = 0, 1, ...``."""

    period: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.period > 0.0:
            raise ConfigError("sampling period must be positive")
        if self.phase < 0.0:
            raise ConfigError("sampling phase must be non-negative")

    def contains(self, t: float, tol: float = 1e-9) -> bool:
        k = (t - self.phase) / self.period
        return k >= -tol and abs(k - round(k)) <= tol


@dataclass(frozen=True)
class BroadcastRecord:
    """What a channel last transmitted: event time, estimate, and the matrix
    neighbours must use to extrapolate it."""

    t_event: float
    nu_hat: np.ndarray
    A_hat: np.ndarray


@dataclass
class ObserverState:
    nu_hat: np.ndarray
    A_hat: np.ndarray
    record: Optional[BroadcastRecord] = None
    events: list = field(default_factory=list)

    def broadcast(self, t: float) -> BroadcastRecord:
        self.record = BroadcastRecord(t, self.nu_hat.copy(), self.A_hat.copy())
        self.events.append(t)
        return self.record


def leader_record(exo: Exosystem) -> BroadcastRecord:
    """The leader's channel; its prediction is the exact leader state."""
    return BroadcastRecord(0.0, exo.nu0.copy(), exo.A.copy())


def predict_broadcast(record: BroadcastRecord, A_used: Optional[np.ndarray], t: float) -> np.ndarray:
    """Extrapolate a held broadcast to time ``t``.

    ``A_used`` defaults to the matrix stored in the record, which is the
    sender's own estimate at the event (or the true ``A`` when known).
    """
    dt = t - record.t_event
    if dt < 0.0:
        raise CausalityError(f"prediction requested at t={t} before the event at {record.t_event}")
    a = record.A_hat if A_used is None else A_used
    if dt == 0.0:
        return record.nu_hat.copy()
    return expm(a, dt) @ record.nu_hat


def _coupling(own_prediction: np.ndarray, neighbor_predictions: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    acc = np.zeros_like(own_prediction)
    for weight, pred in neighbor_predictions:
        if pred.shape != own_prediction.shape:
            raise DimensionError("neighbour prediction has the wrong dimension")
        acc += weight * (pred - own_prediction)
    return acc


def observer_rhs_case1(
    state: ObserverState,
    A: np.ndarray,
    own_prediction: np.ndarray,
    neighbor_predictions: Sequence[tuple[float, np.ndarray]],
    params: ObserverParams,
) -> np.ndarray:
    """``A nu_hat_i + mu2 * sum_j a_ij (nu_bar_j - nu_bar_i)``.

    ``neighbor_predictions`` holds ``(a_ij, nu_bar_j(t))`` pairs, including
    the leader (``j = 0``) when the agent is pinned.
    """
    if state.nu_hat.shape != own_prediction.shape or A.shape[0] != state.nu_hat.size:
        raise DimensionError("observer state, prediction and A dimensions disagree")
    return A @ state.nu_hat + params.mu2 * _coupling(own_prediction, neighbor_predictions)


def observer_rhs_case2(
    state: ObserverState,
    own_A_held: np.ndarray,
    neighbor_A_held: Sequence[tuple[float, np.ndarray]],
    own_prediction: np.ndarray,
    neighbor_predictions: Sequence[tuple[float, np.ndarray]],
    params: ObserverParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of ``(A_hat_i, nu_hat_i)`` when ``A`` is estimated.

    Both terms use held (last broadcast) matrices only: the consensus on
    ``A_hat`` compares held values, and the ``nu_hat`` dynamics are driven
    by the agent's own held ``A_hat_i(t_event)``.
    """
    a_dot = np.zeros_like(own_A_held)
    for weight, a_j in neighbor_A_held:
        if a_j.shape != own_A_held.shape:
            raise DimensionError("neighbour A estimate has the wrong shape")
        a_dot += weight * (a_j - own_A_held)
    a_dot *= params.mu1
    if own_A_held.shape[0] != state.nu_hat.size:
        raise DimensionError("held A estimate does not match nu_hat")
    nu_dot = own_A_held @ state.nu_hat + params.mu2 * _coupling(own_prediction, neighbor_predictions)
    return a_dot, nu_dot


def nu_trigger_margin(nu_hat_now, prediction_now, tau: float, params: ObserverParams) -> float:
    return float(np.linalg.norm(nu_hat_now - prediction_now)) - params.iota_nu * math.exp(-params.gamma_nu * tau)


def A_trigger_margin(A_hat_now, A_hat_held, tau: float, params: ObserverParams) -> float:
    return float(np.linalg.norm(A_hat_now - A_hat_held, 2)) - params.iota_A * math.exp(-params.gamma_A * tau)


def petm_a_fire(nu_hat_now, prediction_now, tau: float, params: ObserverParams) -> bool:
    return nu_trigger_margin(nu_hat_now, prediction_now, tau, params) > 0.0


def petm_case2_conditions(A_hat_now, A_hat_held, nu_hat_now, prediction_now, tau, params) -> tuple[bool, bool]:
    """The two trigger conditions ``(h_A > 0, h_nu > 0)`` separately."""
    return (
        A_trigger_margin(A_hat_now, A_hat_held, tau, params) > 0.0,
        nu_trigger_margin(nu_hat_now, prediction_now, tau, params) > 0.0,
    )


def petm_case2_fire(A_hat_now, A_hat_held, nu_hat_now, prediction_now, tau, params) -> bool:
    fire_a, fire_nu = petm_case2_conditions(A_hat_now, A_hat_held, nu_hat_now, prediction_now, tau, params)
    return fire_a or fire_nu


@dataclass(frozen=True)
class SamplingBound:
    value: float
    term_gain: float
    term_delay: float
    P: np.ndarray

    @property
    def feasible(self) -> bool:
        return self.value > 0.0

    def admits(self, period: float) -> bool:
        return self.feasible and period < self.value


def sampling_period_bound(mu2: float, gamma_nu: float, H) -> SamplingBound:
    """Largest sampling period for which exponential observer convergence at
    rate ``gamma_nu`` is guaranteed (strict upper bound).

    With ``P`` solving ``P H + H^T P = 2 I`` and spectral norms throughout::

        T < min( 1/(6 mu ||H||^2) - gamma ||P|| / (3 mu^2 ||H||^2),
                 1/(mu ||P H|| + 3 mu^2 ||P H|| + gamma) )

    The value is returned even when it is not positive; ``feasible`` tells
    the two cases apart.
    """
    if not (mu2 > 0.0 and gamma_nu > 0.0):
        raise ConfigError("mu2 and gamma_nu must be positive")
    H = np.asarray(H, dtype=float)
    P = solve_lyapunov_2I(H)
    norm_h = np.linalg.norm(H, 2)
    norm_p = np.linalg.norm(P, 2)
    norm_ph = np.linalg.norm(P @ H, 2)
    term_gain = 1.0 / (6.0 * mu2 * norm_h**2) - gamma_nu * norm_p / (3.0 * mu2**2 * norm_h**2)
    term_delay = 1.0 / (mu2 * norm_ph + 3.0 * mu2**2 * norm_ph + gamma_nu)
    return SamplingBound(min(term_gain, term_delay), term_gain, term_delay, P)
