"""Operation history recorded by simulated and real clients."""

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, List, Optional

from core.types import BOTTOM, Timestamp
from dlib.results import OpResult, OpStatus

FINAL_CLIENT = -1


@dataclass
class OpRecord:
    """One client operation, invoke to return, on the virtual clock."""

    op_id: int
    client: int
    kind: str
    key: int
    invoke_ms: float
    return_ms: float = 0.0
    status: str = ""
    ts: Optional[dict] = None
    value: Optional[str] = None
    error: Optional[str] = None
    attempts: int = 0

    @property
    def timestamp(self) -> Timestamp:
        return Timestamp.from_dict(self.ts)

    @property
    def ok(self) -> bool:
        return self.status in (OpStatus.OK.value, OpStatus.NOT_FOUND.value)

    @property
    def acked_put(self) -> bool:
        return self.kind == "put" and self.status == OpStatus.OK.value

    @property
    def final(self) -> bool:
        return self.client == FINAL_CLIENT

    def complete(self, result: OpResult, return_ms: float, value: Optional[bytes] = None) -> None:
        """Fill in the outcome. Puts keep the value they tried to write."""
        self.return_ms = return_ms
        self.status = result.status.value
        self.ts = result.ts.to_dict()
        self.error = result.error
        self.attempts = result.attempts
        if self.kind == "put":
            self.value = value.hex() if value is not None else None
        else:
            self.value = result.value.hex() if result.value is not None else None

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "OpRecord":
        """Create from dictionary."""
        return cls(**data)


@dataclass
class OpHistory:
    """Every operation of one run, in op_id order."""

    records: List[OpRecord] = field(default_factory=list)

    def __iter__(self) -> Iterator[OpRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def begin(self, client: int, kind: str, key: int, invoke_ms: float) -> OpRecord:
        record = OpRecord(len(self.records), client, kind, key, invoke_ms)
        self.records.append(record)
        return record

    def completed(self) -> List[OpRecord]:
        return [r for r in self.records if r.status]

    def by_key(self) -> Dict[int, List[OpRecord]]:
        out: Dict[int, List[OpRecord]] = {}
        for record in self.records:
            out.setdefault(record.key, []).append(record)
        return out

    def puts(self) -> List[OpRecord]:
        return [r for r in self.records if r.kind == "put"]

    def max_acked_ts(self, key: int) -> Timestamp:
        acked = [r.timestamp for r in self.records if r.key == key and r.acked_put]
        return max(acked, default=BOTTOM)

    def to_dict(self) -> dict:
        return {"records": [r.to_dict() for r in self.records]}

    def to_json(self) -> str:
        """Canonical JSON; identical runs give identical bytes."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "OpHistory":
        return cls([OpRecord.from_dict(r) for r in data.get("records", [])])

    def save(self, path: str) -> str:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())
        return path
