"""Periodic event-triggered cooperative output regulation for leader-follower
nonlinear multi-agent systems."""

from .engine import Scenario, SimLog, event_statistics, fit_exponential_rate, run
from .scenario import build_scenario, default_config, default_scenario, load_config

__all__ = [
    "Scenario",
    "SimLog",
    "build_scenario",
    "default_config",
    "default_scenario",
    "event_statistics",
    "fit_exponential_rate",
    "load_config",
    "run",
]

__version__ = "0.1.0"
