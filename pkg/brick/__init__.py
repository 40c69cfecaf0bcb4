"""Brick: the persistent replica server."""

from .brick import Brick, CrashPoint, classify
from .queues import QueueKind, RequestQueues

__all__ = ["Brick", "CrashPoint", "QueueKind", "RequestQueues", "classify"]
