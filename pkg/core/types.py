"""Domain types and pure functions shared by bricks, coordinators and the harness."""

import ipaddress
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Tuple

from core.checksum import crc32, serialize_record
from core.errors import InvalidConfiguration

KEY_MAX = 0xFFFFFFFF
COORD_MAX = 0xFFFFFFFF
WALL_MS_MIN = -(2 ** 63)
WALL_MS_MAX = 2 ** 63 - 1


class Ordering(IntEnum):
    """Result of a three-way comparison."""

    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True, order=True)
class Timestamp:
    """Physical timestamp with the issuing coordinator appended.

    Ordering is lexicographic on (wall_ms, coord).
    """

    wall_ms: int
    coord: int = 0

    @property
    def is_bottom(self) -> bool:
        return self.wall_ms == WALL_MS_MIN and self.coord == 0

    def to_dict(self) -> Optional[dict]:
        """Convert to dictionary (None for BOTTOM)."""
        if self.is_bottom:
            return None
        return {"wall_ms": self.wall_ms, "coord": self.coord}

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "Timestamp":
        """Create from dictionary."""
        if data is None:
            return BOTTOM
        return cls(int(data["wall_ms"]), int(data["coord"]))

    def __str__(self) -> str:
        return "BOTTOM" if self.is_bottom else f"({self.wall_ms},{self.coord})"


# Never written to disk; minimal in the timestamp order.
BOTTOM = Timestamp(WALL_MS_MIN, 0)


def ts_compare(a: Timestamp, b: Timestamp) -> Ordering:
    """Three-way comparison on (wall_ms, coord)."""
    if a < b:
        return Ordering.LESS
    if a > b:
        return Ordering.GREATER
    return Ordering.EQUAL


@dataclass(frozen=True, order=True)
class Endpoint:
    """IPv4 address + port; ordered by (ip, port)."""

    ip: int
    port: int

    def __post_init__(self):
        if not 0 <= self.ip <= 0xFFFFFFFF:
            raise InvalidConfiguration(f"ip out of range: {self.ip}")
        if not 0 <= self.port <= 0xFFFF:
            raise InvalidConfiguration(f"port out of range: {self.port}")

    @property
    def host(self) -> str:
        return str(ipaddress.IPv4Address(self.ip))

    @property
    def address(self) -> Tuple[str, int]:
        return self.host, self.port

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        """Parse ``a.b.c.d:port``."""
        host, sep, port = text.strip().rpartition(":")
        if not sep or not host:
            raise InvalidConfiguration(f"endpoint must be host:port, got {text!r}")
        if host == "localhost":
            host = "127.0.0.1"
        try:
            ip = int(ipaddress.IPv4Address(host))
            return cls(ip, int(port))
        except ValueError as e:
            raise InvalidConfiguration(f"bad endpoint {text!r}: {e}") from e

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


@dataclass(frozen=True, order=True)
class Rgid:
    """Replica group identifier: the low-order ``length`` bits of a key."""

    suffix: int
    length: int

    def __post_init__(self):
        if not 0 <= self.length <= 32:
            raise InvalidConfiguration(f"rgid length must be in [0, 32], got {self.length}")
        if not 0 <= self.suffix < (1 << self.length):
            raise InvalidConfiguration(f"rgid suffix {self.suffix} does not fit in {self.length} bits")

    def matches(self, key: int) -> bool:
        return rgid_of_key(key, self.length) == self.suffix

    def children(self) -> Tuple["Rgid", "Rgid"]:
        """The two Rgids one bit longer that partition this one."""
        if self.length >= 32:
            raise InvalidConfiguration("cannot split a 32-bit rgid")
        return (
            Rgid(self.suffix, self.length + 1),
            Rgid(self.suffix + (1 << self.length), self.length + 1),
        )

    @classmethod
    def parse(cls, text: str) -> "Rgid":
        """Parse ``suffix/len``; suffix may be decimal, 0x or 0b."""
        suffix, sep, length = text.strip().partition("/")
        if not sep:
            raise InvalidConfiguration(f"rgid must be suffix/len, got {text!r}")
        try:
            return cls(int(suffix, 0), int(length))
        except ValueError as e:
            raise InvalidConfiguration(f"bad rgid {text!r}: {e}") from e

    def __str__(self) -> str:
        return f"{self.suffix}/{self.length}"


def parse_rgids(text: str) -> List[Rgid]:
    """Parse a comma list of ``suffix/len`` entries."""
    return [Rgid.parse(part) for part in text.split(",") if part.strip()]


@dataclass(frozen=True)
class QuorumConfig:
    """Replica group size and thresholds; WT + RT > N."""

    n: int
    wt: int
    rt: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidConfiguration(f"group size must be >= 1, got {self.n}")
        if not 1 <= self.wt <= self.n or not 1 <= self.rt <= self.n:
            raise InvalidConfiguration(f"thresholds out of range: {self}")
        if self.wt + self.rt <= self.n:
            raise InvalidConfiguration(f"read and write sets must intersect: {self}")

    @classmethod
    def majority(cls, n: int) -> "QuorumConfig":
        wt, rt = quorum_thresholds(n)
        return cls(n, wt, rt)


def quorum_thresholds(n: int) -> Tuple[int, int]:
    """Majority thresholds: wt = rt = ceil((n + 1) / 2).

    Raises:
        InvalidConfiguration: If n < 1.
    """
    if n < 1:
        raise InvalidConfiguration(f"group size must be >= 1, got {n}")
    majority = (n + 2) // 2
    return majority, majority


def quorums_intersect(parent_n: int, child_n: int) -> bool:
    """Majority quorums over a parent group and a subset of it always overlap."""
    parent_wt, parent_rt = quorum_thresholds(parent_n)
    child_wt, child_rt = quorum_thresholds(child_n)
    return parent_wt + child_rt > parent_n and child_wt + parent_rt > parent_n


def rgid_of_key(key: int, length: int) -> int:
    """Low-order ``length`` bits of ``key``."""
    if not 0 <= length <= 32:
        raise InvalidConfiguration(f"length must be in [0, 32], got {length}")
    return key & ((1 << length) - 1)


def record_checksum(key: int, value: bytes, ts: Timestamp) -> int:
    """CRC-32 over the canonical key|ts|value serialization."""
    return crc32(serialize_record(key, value, ts.wall_ms, ts.coord))


@dataclass(frozen=True)
class Record:
    """Checksummed key-value-timestamp object; the durable unit on a brick."""

    key: int
    value: bytes
    ts: Timestamp
    checksum: int

    @classmethod
    def create(cls, key: int, value: bytes, ts: Timestamp) -> "Record":
        if ts.is_bottom:
            raise InvalidConfiguration("records never carry the BOTTOM timestamp")
        return cls(key, bytes(value), ts, record_checksum(key, value, ts))

    def verify(self) -> bool:
        return self.checksum == record_checksum(self.key, self.value, self.ts)

    def serialize(self) -> bytes:
        return serialize_record(self.key, self.value, self.ts.wall_ms, self.ts.coord)
