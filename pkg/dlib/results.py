"""Result and event types returned by the coordinator."""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional

from core.types import BOTTOM, Endpoint, Timestamp


class OpStatus(str, Enum):
    """Client-visible outcome of a put or get."""

    OK = "ok"
    NOT_FOUND = "not_found"
    PUT_FAILED = "put_failed"
    CLOCK_SKEW_REJECTED = "clock_skew_rejected"
    GET_FAILED = "get_failed"


@dataclass
class OpResult:
    """Result of one coordinator operation."""

    status: OpStatus
    key: int
    value: Optional[bytes] = None
    ts: Timestamp = BOTTOM
    error: Optional[str] = None
    attempts: int = 1
    repairs: int = 0

    @property
    def success(self) -> bool:
        return self.status in (OpStatus.OK, OpStatus.NOT_FOUND)

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "status": self.status.value,
            "key": self.key,
            "value": self.value.hex() if self.value is not None else None,
            "ts": self.ts.to_dict(),
            "error": self.error,
            "attempts": self.attempts,
            "repairs": self.repairs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OpResult":
        """Create from dictionary."""
        value = data.get("value")
        return cls(
            status=OpStatus(data["status"]),
            key=int(data["key"]),
            value=bytes.fromhex(value) if value is not None else None,
            ts=Timestamp.from_dict(data.get("ts")),
            error=data.get("error"),
            attempts=int(data.get("attempts", 1)),
            repairs=int(data.get("repairs", 0)),
        )


class HealthKind(str, Enum):
    """Suspicion sources the control plane listens for."""

    REFUSED = "refused"
    RESET = "reset"
    TIMEOUT = "timeout"
    FAIL_STOP = "fail_stop"
    FAIL_STUTTER = "fail_stutter"
    RESTART_DISPATCHED = "restart_dispatched"
    NO_RESTARTER = "no_restarter"


@dataclass
class HealthEvent:
    """Something a Dlib noticed about a brick."""

    endpoint: Endpoint
    kind: HealthKind
    at_ms: float
    detail: str = ""

    def to_dict(self) -> dict:
        data = asdict(self)
        data["endpoint"] = str(self.endpoint)
        data["kind"] = self.kind.value
        return data
