"""Joint association, trajectory and power optimization for UAV-aided edge computing."""

from .model import (
    Association,
    ChannelParams,
    EnergyLedger,
    InstanceError,
    PowerSchedule,
    Scenario,
    TimeGrid,
    Trajectory,
    UavParams,
    UeBudget,
    UePoint,
    audit,
    evaluate,
)
from .orchestrator import RunConfig, Scheme, SolveReport, init_state, run, run_schemes, sweep
from .scenario import default_scenario, load

__all__ = [
    "Association", "ChannelParams", "EnergyLedger", "InstanceError", "PowerSchedule", "Scenario",
    "TimeGrid", "Trajectory", "UavParams", "UeBudget", "UePoint", "audit", "evaluate",
    "RunConfig", "Scheme", "SolveReport", "init_state", "run", "run_schemes", "sweep",
    "default_scenario", "load",
]
__version__ = "0.1.0"
