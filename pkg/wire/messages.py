"""Message types, opcodes and status codes for the brick protocol.

Every message knows how to pack its own payload; framing lives in ``codec``.
All integers are big-endian.
"""

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import ClassVar, Dict, Optional, Tuple, Type

from core.checksum import RECORD_HEADER, serialize_record
from core.errors import ProtocolError, TruncatedFrame
from core.types import BOTTOM, Endpoint, Rgid, Timestamp

_TS = struct.Struct(">qI")
_U8 = struct.Struct(">B")
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")
_U64 = struct.Struct(">Q")
_ENDPOINT = struct.Struct(">IH")
_RGID = struct.Struct(">IB")

END_OF_KEYS = 0xFFFFFFFF


class Status(IntEnum):
    """One-byte status carried by WRITE_REPLY, CTL_ACK and ERROR_REPLY."""

    OK = 0
    STALE_IGNORED = 1
    TIMESTAMP_ERROR = 2
    WRONG_REPLICA_GROUP = 3
    BUSY = 4
    RECORD_TOO_LARGE = 5
    IO_ERROR = 6
    CORRUPT_RECORD = 7
    DEDUPED = 8
    ESCALATED_TO_OFFLINE = 9
    SUPERVISOR_FAILED = 10
    PROTOCOL_ERROR = 11

    # Aliases for readability at call sites.
    STORED = 0
    EXECUTED = 0


class PayloadReader:
    """Bounds-checked cursor over one frame's payload."""

    def __init__(self, data: bytes):
        self._view = memoryview(data)
        self._pos = 0

    @property
    def remaining(self) -> int:
        return len(self._view) - self._pos

    def take(self, n: int) -> bytes:
        if n < 0 or n > self.remaining:
            raise TruncatedFrame(f"need {n} bytes, {self.remaining} left")
        out = bytes(self._view[self._pos:self._pos + n])
        self._pos += n
        return out

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def u8(self) -> int:
        return self.unpack(_U8)[0]

    def u16(self) -> int:
        return self.unpack(_U16)[0]

    def u32(self) -> int:
        return self.unpack(_U32)[0]

    def u64(self) -> int:
        return self.unpack(_U64)[0]

    def i64(self) -> int:
        return self.unpack(_I64)[0]

    def ts(self) -> Timestamp:
        wall_ms, coord = self.unpack(_TS)
        return Timestamp(wall_ms, coord)

    def endpoint(self) -> Endpoint:
        ip, port = self.unpack(_ENDPOINT)
        return Endpoint(ip, port)

    def rgids(self) -> Tuple[Rgid, ...]:
        count = self.u16()
        out = []
        for _ in range(count):
            suffix, length = self.unpack(_RGID)
            try:
                out.append(Rgid(suffix, length))
            except ValueError as e:
                raise ProtocolError(str(e)) from e
        return tuple(out)

    def finish(self) -> None:
        if self.remaining:
            raise ProtocolError(f"{self.remaining} trailing payload bytes")


def _pack_ts(ts: Timestamp) -> bytes:
    return _TS.pack(ts.wall_ms, ts.coord)


def _pack_endpoint(endpoint: Endpoint) -> bytes:
    return _ENDPOINT.pack(endpoint.ip, endpoint.port)


def _pack_rgids(rgids: Tuple[Rgid, ...]) -> bytes:
    return _U16.pack(len(rgids)) + b"".join(_RGID.pack(r.suffix, r.length) for r in rgids)


class Message:
    """Base for all protocol messages."""

    OPCODE: ClassVar[int]

    def pack(self) -> bytes:
        raise NotImplementedError

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "Message":
        raise NotImplementedError


# ============== brick requests ==============

@dataclass(frozen=True)
class WriteRequest(Message):
    OPCODE: ClassVar[int] = 0x01
    key: int
    ts: Timestamp
    value: bytes

    def pack(self) -> bytes:
        return serialize_record(self.key, self.value, self.ts.wall_ms, self.ts.coord)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "WriteRequest":
        key, wall_ms, coord, length = reader.unpack(RECORD_HEADER)
        return cls(key, Timestamp(wall_ms, coord), reader.take(length))


@dataclass(frozen=True)
class ReadValRequest(Message):
    OPCODE: ClassVar[int] = 0x02
    key: int

    def pack(self) -> bytes:
        return _U32.pack(self.key)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "ReadValRequest":
        return cls(reader.u32())


@dataclass(frozen=True)
class ReadTsRequest(Message):
    OPCODE: ClassVar[int] = 0x03
    key: int

    def pack(self) -> bytes:
        return _U32.pack(self.key)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "ReadTsRequest":
        return cls(reader.u32())


@dataclass(frozen=True)
class ScanKeysRequest(Message):
    OPCODE: ClassVar[int] = 0x04
    offset: int
    limit: int

    def pack(self) -> bytes:
        return _U32.pack(self.offset) + _U32.pack(self.limit)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "ScanKeysRequest":
        return cls(reader.u32(), reader.u32())


@dataclass(frozen=True)
class BeaconRequest(Message):
    OPCODE: ClassVar[int] = 0x05

    def pack(self) -> bytes:
        return b""

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "BeaconRequest":
        return cls()


# ============== brick replies ==============

@dataclass(frozen=True)
class WriteReply(Message):
    OPCODE: ClassVar[int] = 0x81
    status: Status

    def pack(self) -> bytes:
        return _U8.pack(self.status)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "WriteReply":
        return cls(_status(reader.u8()))


@dataclass(frozen=True)
class ValReply(Message):
    OPCODE: ClassVar[int] = 0x82
    ts: Timestamp
    present: bool
    value: bytes = b""

    def pack(self) -> bytes:
        return _pack_ts(self.ts) + _U8.pack(1 if self.present else 0) + _U32.pack(len(self.value)) + self.value

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "ValReply":
        ts = reader.ts()
        present = reader.u8()
        if present not in (0, 1):
            raise ProtocolError(f"bad present flag {present}")
        value = reader.take(reader.u32())
        return cls(ts, bool(present), value)


@dataclass(frozen=True)
class TsReply(Message):
    OPCODE: ClassVar[int] = 0x83
    ts: Timestamp

    def pack(self) -> bytes:
        return _pack_ts(self.ts)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "TsReply":
        return cls(reader.ts())


@dataclass(frozen=True)
class KeysReply(Message):
    OPCODE: ClassVar[int] = 0x84
    next_offset: int
    keys: Tuple[int, ...] = ()

    def pack(self) -> bytes:
        return _U32.pack(self.next_offset) + _U32.pack(len(self.keys)) + b"".join(_U32.pack(k) for k in self.keys)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "KeysReply":
        next_offset = reader.u32()
        count = reader.u32()
        if count * 4 > reader.remaining:
            raise TruncatedFrame(f"{count} keys declared, {reader.remaining} bytes left")
        return cls(next_offset, tuple(reader.u32() for _ in range(count)))


@dataclass(frozen=True)
class ErrorReply(Message):
    OPCODE: ClassVar[int] = 0x8F
    status: Status

    def pack(self) -> bytes:
        return _U8.pack(self.status)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "ErrorReply":
        return cls(_status(reader.u8()))


# ============== control channel ==============

@dataclass(frozen=True)
class RestartBrick(Message):
    OPCODE: ClassVar[int] = 0x90
    target: Endpoint

    def pack(self) -> bytes:
        return _pack_endpoint(self.target)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "RestartBrick":
        return cls(reader.endpoint())


@dataclass(frozen=True)
class CtlAck(Message):
    OPCODE: ClassVar[int] = 0x91
    status: Status

    def pack(self) -> bytes:
        return _U8.pack(self.status)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "CtlAck":
        return cls(_status(reader.u8()))


@dataclass(frozen=True)
class AnnounceRgids(Message):
    OPCODE: ClassVar[int] = 0x92
    rgids: Tuple[Rgid, ...]

    def pack(self) -> bytes:
        return _pack_rgids(self.rgids)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "AnnounceRgids":
        return cls(reader.rgids())


@dataclass(frozen=True)
class WithdrawRgids(Message):
    OPCODE: ClassVar[int] = 0x93
    rgids: Tuple[Rgid, ...]

    def pack(self) -> bytes:
        return _pack_rgids(self.rgids)

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "WithdrawRgids":
        return cls(reader.rgids())


# ============== beacons ==============

@dataclass(frozen=True)
class Beacon(Message):
    OPCODE: ClassVar[int] = 0xA0
    sender: Endpoint
    sequence: int
    rgids: Tuple[Rgid, ...]
    sender_time_ms: int = field(default=0)

    def pack(self) -> bytes:
        return (
            _pack_endpoint(self.sender)
            + _U64.pack(self.sequence)
            + _pack_rgids(self.rgids)
            + _I64.pack(self.sender_time_ms)
        )

    @classmethod
    def unpack(cls, reader: PayloadReader) -> "Beacon":
        sender = reader.endpoint()
        sequence = reader.u64()
        rgids = reader.rgids()
        return cls(sender, sequence, rgids, reader.i64())


def _status(code: int) -> Status:
    try:
        return Status(code)
    except ValueError as e:
        raise ProtocolError(f"unknown status code {code}") from e


MESSAGE_TYPES: Dict[int, Type[Message]] = {
    cls.OPCODE: cls
    for cls in (
        WriteRequest, ReadValRequest, ReadTsRequest, ScanKeysRequest, BeaconRequest,
        WriteReply, ValReply, TsReply, KeysReply, ErrorReply,
        RestartBrick, CtlAck, AnnounceRgids, WithdrawRgids, Beacon,
    )
}

DATA_REQUESTS = (WriteRequest, ReadValRequest, ReadTsRequest, ScanKeysRequest)
CONTROL_REQUESTS = (RestartBrick, AnnounceRgids, WithdrawRgids, BeaconRequest)


def absent_reply() -> ValReply:
    """VAL_REPLY for a key the brick has never stored."""
    return ValReply(BOTTOM, False, b"")


def reply_status(reply: Optional[Message]) -> Optional[Status]:
    """Status carried by a reply, or None for value-bearing replies."""
    return getattr(reply, "status", None)
