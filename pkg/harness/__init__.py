"""Deterministic simulator, fault scenarios and history checker."""

from .checker import Verdict, Violation, check_history
from .history import OpHistory, OpRecord
from .runner import RunResult, run
from .scenario import EventKind, FaultEvent, Scenario, WorkloadSpec, load_scenario, preset

__all__ = [
    "EventKind",
    "FaultEvent",
    "OpHistory",
    "OpRecord",
    "RunResult",
    "Scenario",
    "Verdict",
    "Violation",
    "WorkloadSpec",
    "check_history",
    "load_scenario",
    "preset",
    "run",
]
