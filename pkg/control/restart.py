"""Restarter-side policy: dedup, rate limit and persistent-fault escalation."""

import logging
import threading
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Set

from config import RestartPolicy
from core.runtime import Runtime
from core.types import Endpoint
from services.alerts import send_operator_alert
from services.supervisor import SupervisorHandle
from wire.messages import Status

logger = logging.getLogger(__name__)

AlertFn = Callable[[str, dict], object]


class RestartOutcome(str, Enum):
    """What a restarter did with one RESTART_BRICK request."""

    EXECUTED = "executed"
    DEDUPED = "deduped"
    ESCALATED_TO_OFFLINE = "escalated_to_offline"
    SUPERVISOR_FAILED = "supervisor_failed"

    @property
    def status(self) -> Status:
        return {
            RestartOutcome.EXECUTED: Status.EXECUTED,
            RestartOutcome.DEDUPED: Status.DEDUPED,
            RestartOutcome.ESCALATED_TO_OFFLINE: Status.ESCALATED_TO_OFFLINE,
            RestartOutcome.SUPERVISOR_FAILED: Status.SUPERVISOR_FAILED,
        }[self]

    @classmethod
    def from_status(cls, status: Status) -> Optional["RestartOutcome"]:
        for outcome in cls:
            if outcome.status == status:
                return outcome
        return None


@dataclass
class RestartEvent:
    """One handled request, kept for status output."""

    at_ms: float
    target: str
    requester: str
    outcome: str

    def to_dict(self) -> dict:
        return {"at_ms": self.at_ms, "target": self.target, "requester": self.requester, "outcome": self.outcome}


class Restarter:
    """Handles RESTART_BRICK on behalf of the brick that received it.

    Per target: at most one supervisor execution per ``dedup_interval_ms``;
    once ``max_restarts`` executions fall inside ``restart_window_ms`` the next
    request takes the target offline instead.

    An execution counts when the supervisor is invoked, whether or not it
    reports success: a failed run is still deduped, and a supervisor that
    keeps failing ends in the same offline escalation.
    """

    def __init__(
        self,
        policy: RestartPolicy,
        runtime: Runtime,
        supervisor: SupervisorHandle,
        alert: AlertFn = send_operator_alert,
        name: str = "",
    ):
        self.policy = policy
        self.runtime = runtime
        self.supervisor = supervisor
        self.alert = alert
        self.name = name
        self.offline: Set[Endpoint] = set()
        self.log: List[RestartEvent] = []
        self._executions: Dict[Endpoint, List[float]] = defaultdict(list)
        self._locks: Dict[Endpoint, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def _lock_for(self, target: Endpoint) -> threading.Lock:
        with self._locks_guard:
            return self._locks[target]

    def executions(self, target: Endpoint) -> List[float]:
        return list(self._executions.get(target, []))

    def request_restart(self, target: Endpoint, requester: str = "") -> RestartOutcome:
        with self._lock_for(target):
            outcome = self._decide_and_act(target, requester)
            self.log.append(RestartEvent(self.runtime.now_ms(), str(target), requester, outcome.value))
        return outcome

    def _decide_and_act(self, target: Endpoint, requester: str) -> RestartOutcome:
        now = self.runtime.now_ms()
        if target in self.offline:
            return RestartOutcome.ESCALATED_TO_OFFLINE

        recent = [t for t in self._executions[target] if now - t < self.policy.restart_window_ms]
        self._executions[target] = recent
        if recent and now - recent[-1] < self.policy.dedup_interval_ms:
            logger.warning("restart of %s from %s deduped (last %.0f ms ago)", target, requester, now - recent[-1])
            return RestartOutcome.DEDUPED

        if len(recent) >= self.policy.max_restarts:
            self.offline.add(target)
            logger.warning("%s restarted %d times in %.0f ms; taking it offline", target, len(recent),
                           self.policy.restart_window_ms)
            stopped = self.supervisor.stop(target)
            self.alert(
                f"brick {target} has a persistent fault and was taken offline",
                {"target": str(target), "restarts": len(recent), "stopped": stopped, "restarter": self.name},
            )
            return RestartOutcome.ESCALATED_TO_OFFLINE

        # Counted before the supervisor runs; see the class docstring.
        recent.append(now)
        logger.warning("restarting %s on behalf of %s", target, requester or "unknown")
        if not self.supervisor.restart(target):
            return RestartOutcome.SUPERVISOR_FAILED
        return RestartOutcome.EXECUTED

    def status(self) -> dict:
        return {
            "offline": sorted(str(e) for e in self.offline),
            "log": [event.to_dict() for event in self.log[-50:]],
        }
