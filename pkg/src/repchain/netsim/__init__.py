"""Discrete-event simulation of reputation-consensus sub-chains and the global chain."""

from .dos import DoSBudget, charge_block_broadcast, max_accepted_blocks
from .metrics import MetricsLog
from .world import SimulationError, SimWorld, run, simulate

__all__ = [
    "DoSBudget",
    "MetricsLog",
    "SimWorld",
    "SimulationError",
    "charge_block_broadcast",
    "max_accepted_blocks",
    "run",
    "simulate",
]
