"""Leader dynamics ``nu' = A nu`` with output ``y0 = q0(nu)``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, InputError
from .linalg import SKEW_TOL, as_colvec, as_matrix, expm, is_skew_symmetric


@dataclass(frozen=True)
class Exosystem:
    """Autonomous leader.

    ``output_row`` gives the linear output map used by the benchmark.  A
    general smooth map can be supplied through ``output_map``; it must
    vanish at the origin.
    """

    A: np.ndarray
    nu0: np.ndarray
    output_row: Optional[np.ndarray] = None
    output_map: Optional[Callable[[np.ndarray], float]] = field(default=None, compare=False)

    def __post_init__(self):
        a = as_matrix(self.A, "A")
        if a.shape[0] != a.shape[1]:
            raise ConfigError("exosystem matrix must be square")
        nu0 = as_colvec(self.nu0, "nu0")
        if nu0.size != a.shape[0]:
            raise ConfigError(f"nu0 must have {a.shape[0]} entries")
        if self.output_map is None:
            row = np.zeros(a.shape[0]) if self.output_row is None else as_colvec(self.output_row, "output row")
            if self.output_row is None:
                row[0] = 1.0
            if row.size != a.shape[0]:
                raise ConfigError(f"output row must have {a.shape[0]} entries")
            object.__setattr__(self, "output_row", row)
        elif abs(float(self.output_map(np.zeros(a.shape[0])))) > 1e-12:
            raise ConfigError("leader output map must satisfy q0(0) = 0")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "nu0", nu0)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def is_valid(self) -> bool:
        return is_skew_symmetric(self.A, SKEW_TOL)

    def q0(self, nu: np.ndarray) -> float:
        if self.output_map is not None:
            return float(self.output_map(nu))
        return float(self.output_row @ nu)


def leader_state(exo: Exosystem, t: float) -> np.ndarray:
    if t < 0:
        raise InputError("leader state is only defined for t >= 0")
    return expm(exo.A, t) @ exo.nu0


def leader_output(exo: Exosystem, t: float) -> float:
    return exo.q0(leader_state(exo, t))
