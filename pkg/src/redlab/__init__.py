"""Simulation laboratory for TCP/RED bottleneck dynamics.

Two hybrid models of a RED-managed bottleneck (a continuous ODE with a
window-halving impulse, and its self-clocked discrete map), a packet-level
reference simulator, trace analysis and a particle filter.
"""

from .core import (
    ConfigError,
    DiscreteState,
    IntegrationDiverged,
    ModelState,
    NetworkConfig,
    Phase,
    RedParams,
    Source,
    Trace,
    capacity_pps,
    red_probability,
    rtt,
)
from .drops import DropMode, DropProcess

__all__ = [
    "ConfigError",
    "DiscreteState",
    "DropMode",
    "DropProcess",
    "IntegrationDiverged",
    "ModelState",
    "NetworkConfig",
    "Phase",
    "RedParams",
    "Source",
    "Trace",
    "capacity_pps",
    "red_probability",
    "rtt",
]
