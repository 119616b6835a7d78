"""Output-feedback controller stack for one follower.

A high-gain observer driven by the event-held surrogate error reconstructs
the error derivatives ``xi_hat``.  A backstepping-style cascade turns them
into ``zeta_hat`` and the actuator receives the saturated feedback on
``zeta_hat_n`` plus the internal-model output ``Phi eta``.  Two periodic
event triggers gate the sensor-to-controller (``petm_b``) and, optionally,
the controller-to-actuator (``petm_c``) channels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .internal_model import InternalModel
from .linalg import is_hurwitz_poly


@dataclass(frozen=True)
class ControllerParams:
    Gamma_hgo: float = 40.0
    d: tuple = (5.0, 10.0)
    b_hat: float = 1.0
    Q: tuple = (2.0,)
    K: float = 30.0
    sat_R: float = 50.0
    iota_e: float = 0.1
    iota_omega: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "d", tuple(float(v) for v in self.d))
        object.__setattr__(self, "Q", tuple(float(v) for v in self.Q))
        if self.Gamma_hgo < 1.0:
            raise ConfigError("high-gain parameter must be >= 1")
        if len(self.d) < 1:
            raise ConfigError("need at least one high-gain observer coefficient d")
        if len(self.Q) < len(self.d) - 1 or any(v <= 0.0 for v in self.Q):
            raise ConfigError(f"need {len(self.d) - 1} positive backstepping gains Q")
        for name in ("b_hat", "K", "sat_R"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"controller parameter {name} must be positive")
        if self.iota_e < 0.0 or self.iota_omega < 0.0:
            raise ConfigError("trigger thresholds must be non-negative")

    @property
    def order(self) -> int:
        return len(self.d)

    def d_is_hurwitz(self) -> bool:
        return is_hurwitz_poly(self.d)

    def hgo_gains(self) -> np.ndarray:
        """``Gamma^j d_j`` for ``j = 1..n``."""
        return np.array([self.Gamma_hgo ** (j + 1) * dj for j, dj in enumerate(self.d)])


@dataclass
class ControllerState:
    xi_hat: np.ndarray
    e_hat_held: float = 0.0
    e_event_time: Optional[float] = None
    omega_held: float = 0.0
    omega_event_time: Optional[float] = None
    u_bar: float = 0.0
    events: dict = field(default_factory=lambda: {"petm_b": 0, "petm_c": 0})


def sat(x: float, limit: float) -> float:
    return min(max(x, -limit), limit)


def e_hat(y_i: float, nu_hat: np.ndarray, q0: Callable[[np.ndarray], float]) -> float:
    """Surrogate regulation error ``y_i - q0(nu_hat_i)``."""
    return float(y_i - q0(nu_hat))


def petm_b_fire(e_hat_now: float, e_hat_held: float, iota_e: float) -> bool:
    return abs(e_hat_now - e_hat_held) > iota_e * abs(e_hat_now)


def petm_c_fire(omega_now: float, omega_held: float, iota_omega: float) -> bool:
    return abs(omega_now - omega_held) > iota_omega * abs(omega_now)


def hgo_rhs(state: ControllerState, params: ControllerParams, u_bar: float) -> np.ndarray:
    """High-gain observer driven by the held surrogate error.

    ``xi_j' = xi_{j+1} + Gamma^j d_j (e_held - xi_1)`` for ``j < n`` and
    ``xi_n' = b_hat u_bar + Gamma^n d_n (e_held - xi_1)``.
    """
    xi = state.xi_hat
    innovation = state.e_hat_held - xi[0]
    out = params.hgo_gains() * innovation
    out[:-1] += xi[1:]
    out[-1] += params.b_hat * u_bar
    return out


def zeta_hat_cascade(xi_hat: np.ndarray, Q: Sequence[float]) -> np.ndarray:
    """``zeta_1 = xi_1``, ``zeta_j = xi_j + Q_{j-1} zeta_{j-1}``.

    This is ``zeta_j = xi_j - alpha_{j-1}`` with ``alpha_j = -Q_j zeta_j``.
    """
    n = len(xi_hat)
    if len(Q) < n - 1:
        raise ConfigError(f"need {n - 1} backstepping gains, got {len(Q)}")
    zeta = np.empty(n)
    zeta[0] = xi_hat[0]
    for j in range(1, n):
        zeta[j] = xi_hat[j] + Q[j - 1] * zeta[j - 1]
    return zeta


def feedback_term(xi_hat: np.ndarray, params: ControllerParams) -> float:
    """Saturated stabilising feedback ``sat_R(-K zeta_hat_n)``.

    The gain acts with negative sign so that ``zeta_n' = ... + b u_bar`` is
    damped for ``K > 0``.
    """
    zeta = zeta_hat_cascade(xi_hat, params.Q)
    return sat(-params.K * zeta[-1], params.sat_R)


def control_output(state: ControllerState, im: InternalModel, params: ControllerParams) -> float:
    return feedback_term(state.xi_hat, params) + im.output()
