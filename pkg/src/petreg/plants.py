"""Follower plants in strict-feedback form and the Lorenz benchmark agent."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DivergenceError

# rhs(state, nu, u) -> d(state)/dt, with state = concat(z, x)
FlatRhs = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class StrictFeedbackPlant:
    """``z' = f0(z, x1, nu, w)``, ``x_j' = f_j(...) + b_j x_{j+1}``,
    ``x_n' = f_n(...) + b_n u`` with output ``y = x_1``.

    The state vector seen by ``rhs`` is ``concat(z, x)``; the uncertain
    parameters ``w`` are closed over by ``rhs``.
    """

    n: int
    n_z: int
    rhs: FlatRhs = field(compare=False)
    name: str = "custom"

    def __post_init__(self):
        if self.n < 1 or self.n_z < 0:
            raise ConfigError("plant order must be >= 1 and zero-dynamics dimension >= 0")

    @property
    def dim(self) -> int:
        return self.n + self.n_z

    @property
    def output_index(self) -> int:
        return self.n_z

    def output(self, state: np.ndarray) -> float:
        return float(state[self.n_z])


@dataclass(frozen=True)
class LorenzAgent:
    g1: float = -10.0
    g2: float = 10.0
    g3: float = -8.0 / 3.0
    g4: float = 1.0
    g5: float = 0.0
    g6: float = 0.2
    g7: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.params())):
            raise ConfigError("Lorenz parameters must be finite")

    def params(self) -> np.ndarray:
        return np.array([self.g1, self.g2, self.g3, self.g4, self.g5, self.g6, self.g7])

    def plant(self) -> StrictFeedbackPlant:
        g1, g2, g3, g4, g5, g6, g7 = (float(v) for v in self.params())

        def rhs(s, nu, u):
            z1, z2, x1, x2 = s
            return np.array([
                g1 * z1 + g2 * x1,
                g3 * z2 + z1 * x1,
                g4 * z1 + g5 * x1 - z1 * z2 + x2,
                g6 * z1 + g7 * z2 * x1 + u,
            ])

        return StrictFeedbackPlant(n=2, n_z=2, rhs=rhs, name="lorenz")


def lorenz_rhs(state, u: float, params: LorenzAgent) -> np.ndarray:
    """Derivative of ``(z1, z2, x1, x2)``."""
    out = params.plant().rhs(np.asarray(state, dtype=float), np.zeros(0), float(u))
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite Lorenz derivative")
    return out


@dataclass
class PlantReport:
    probes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.probes.values())

    def failures(self) -> list[str]:
        return [k for k, ok in self.probes.items() if not ok]


def validate_plant(p: StrictFeedbackPlant, nu_dim: int = 2, seed: int = 0, tol: float = 1e-9) -> PlantReport:
    """Structural probes on a plant; never raises on a failed probe.

    * equilibrium: the vector field vanishes at the origin with ``u = 0``
    * input channel: ``u`` only enters the last ``x`` equation
    * affinity: the second difference in ``u`` vanishes (three-point test)
    * positive gain: the ``u`` coefficient is positive
    """
    rng = np.random.default_rng(seed)
    report = PlantReport()
    zero = np.zeros(p.dim)
    try:
        f0 = p.rhs(zero, np.zeros(nu_dim), 0.0)
        report.probes["equilibrium at origin"] = bool(np.max(np.abs(f0)) <= tol)
    except Exception:
        report.probes["equilibrium at origin"] = False

    only_last, affine, positive = True, True, True
    for _ in range(5):
        s = rng.uniform(-1.0, 1.0, p.dim)
        nu = rng.uniform(-1.0, 1.0, nu_dim)
        fm, f0, fp = (np.asarray(p.rhs(s, nu, u), dtype=float) for u in (-1.0, 0.0, 1.0))
        slope = 0.5 * (fp - fm)
        curvature = fp + fm - 2.0 * f0
        scale = max(1.0, float(np.max(np.abs(f0))))
        if np.max(np.abs(slope[:-1])) > tol * scale:
            only_last = False
        if np.max(np.abs(curvature)) > tol * scale:
            affine = False
        if not slope[-1] > 0.0:
            positive = False
    report.probes["input enters last channel only"] = only_last
    report.probes["affine in input"] = affine
    report.probes["positive input gain"] = positive
    return report
