"""Frame encoding and decoding.

Frame layout (big-endian):
    length u32 | opcode u8 | request_id u64 | payload

``length`` counts everything after itself, so ``length = 9 + len(payload)``.
"""

import struct
from dataclasses import fields
from typing import Iterator, List, Optional, Tuple

from core.errors import FrameTooLarge, ProtocolError, TruncatedFrame, UnknownOpcode
from core.types import Endpoint, Rgid, Timestamp
from wire.messages import MESSAGE_TYPES, Message, PayloadReader

MAX_FRAME = 16 * 1024 * 1024
LENGTH = struct.Struct(">I")
HEADER = struct.Struct(">BQ")
MIN_LENGTH = HEADER.size  # 9


def encode(message: Message, request_id: int = 0) -> bytes:
    """Frame one message."""
    payload = message.pack()
    length = MIN_LENGTH + len(payload)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"frame of {length} bytes exceeds {MAX_FRAME}")
    return LENGTH.pack(length) + HEADER.pack(message.OPCODE, request_id) + payload


def decode_body(body: bytes) -> Tuple[int, Message]:
    """Decode ``opcode | request_id | payload`` (the bytes after the length)."""
    if len(body) < MIN_LENGTH:
        raise TruncatedFrame(f"frame body of {len(body)} bytes is shorter than its header")
    opcode, request_id = HEADER.unpack_from(body)
    cls = MESSAGE_TYPES.get(opcode)
    if cls is None:
        raise UnknownOpcode(f"unknown opcode 0x{opcode:02x}")
    reader = PayloadReader(body[MIN_LENGTH:])
    try:
        message = cls.unpack(reader)
    except ValueError as e:
        raise ProtocolError(str(e)) from e
    reader.finish()
    return request_id, message


def frame_length(data: bytes, offset: int = 0) -> Optional[int]:
    """Declared body length at ``offset``, or None if the prefix is incomplete."""
    if len(data) - offset < LENGTH.size:
        return None
    (length,) = LENGTH.unpack_from(data, offset)
    if length > MAX_FRAME:
        raise FrameTooLarge(f"declared frame length {length} exceeds {MAX_FRAME}")
    if length < MIN_LENGTH:
        raise ProtocolError(f"declared frame length {length} is below the header size")
    return length


def decode_frame(data: bytes, offset: int = 0) -> Tuple[int, Message, int]:
    """Decode one complete frame.

    Returns:
        (request_id, message, end_offset)

    Raises:
        TruncatedFrame: If ``data`` ends before the declared length.
        FrameTooLarge: If the declared length exceeds 16 MiB.
        UnknownOpcode: For opcodes outside the protocol.
    """
    length = frame_length(data, offset)
    if length is None:
        raise TruncatedFrame("length prefix truncated")
    start = offset + LENGTH.size
    end = start + length
    if end > len(data):
        raise TruncatedFrame(f"frame declares {length} bytes, {len(data) - start} available")
    request_id, message = decode_body(bytes(data[start:end]))
    return request_id, message, end


def decode(data: bytes) -> Message:
    """Decode a buffer holding exactly one frame."""
    _, message, end = decode_frame(data)
    if end != len(data):
        raise ProtocolError(f"{len(data) - end} bytes after frame")
    return message


class FrameReader:
    """Incremental decoder for a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> List[Tuple[int, Message]]:
        """Append bytes and return every complete frame now available."""
        self._buf.extend(data)
        out = []
        while True:
            length = frame_length(self._buf)
            if length is None or len(self._buf) < LENGTH.size + length:
                break
            body = bytes(self._buf[LENGTH.size:LENGTH.size + length])
            del self._buf[:LENGTH.size + length]
            out.append(decode_body(body))
        return out

    @property
    def pending(self) -> int:
        """Bytes buffered towards an incomplete frame."""
        return len(self._buf)


# ============== dump ==============

def _plain(value):
    if isinstance(value, Timestamp):
        return value.to_dict()
    if isinstance(value, (Endpoint, Rgid)):
        return str(value)
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if hasattr(value, "name") and isinstance(value, int):
        return value.name
    return value


def describe(message: Message) -> dict:
    """JSON-friendly view of a message."""
    out = {"type": type(message).__name__, "opcode": f"0x{message.OPCODE:02x}"}
    for f in fields(message):
        out[f.name] = _plain(getattr(message, f.name))
    return out


def iter_frames(data: bytes) -> Iterator[dict]:
    """Decode concatenated frames for inspection.

    Yields one dict per frame; a frame that fails to decode yields an ``error``
    entry and stops the walk, since the stream position is lost.
    """
    offset = 0
    while offset < len(data):
        try:
            request_id, message, end = decode_frame(data, offset)
        except TruncatedFrame as e:
            yield {"offset": offset, "error": f"partial frame: {e}"}
            return
        except ProtocolError as e:
            yield {"offset": offset, "error": str(e)}
            return
        entry = {"offset": offset, "request_id": request_id}
        entry.update(describe(message))
        yield entry
        offset = end
