"""Offline energy management for an energy-harvesting link with a helper node."""

from ehhelper.model import (
    CostModel,
    EnergyTrace,
    Policy,
    TraceError,
    builtin_cost_model,
    validate_trace,
)
from ehhelper.scenarios import (
    ScenarioKind,
    Solution,
    solve,
    solve_s1,
    solve_s2,
    solve_s3,
    solve_s4,
    transfer_schedule,
)

__all__ = [
    "CostModel",
    "EnergyTrace",
    "Policy",
    "ScenarioKind",
    "Solution",
    "TraceError",
    "builtin_cost_model",
    "solve",
    "solve_s1",
    "solve_s2",
    "solve_s3",
    "solve_s4",
    "transfer_schedule",
    "validate_trace",
]

__version__ = "0.1.0"
