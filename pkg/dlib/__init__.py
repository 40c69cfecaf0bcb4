"""Client-side coordinator library."""

from .dlib import Dlib, next_highest
from .results import HealthEvent, HealthKind, OpResult, OpStatus
from .stats import LatencySample, LatencyStats

__all__ = [
    "Dlib",
    "HealthEvent",
    "HealthKind",
    "LatencySample",
    "LatencyStats",
    "OpResult",
    "OpStatus",
    "next_highest",
]
