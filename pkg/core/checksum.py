"""Canonical record serialization and its CRC-32.

Layout (all big-endian):
    key u32 | ts.wall_ms i64 | ts.coord u32 | value length u32 | value bytes

The disk format and the WRITE wire payload both embed this layout.
"""

import struct
import zlib
from typing import Optional, Tuple

RECORD_HEADER = struct.Struct(">IqII")
RECORD_HEADER_SIZE = RECORD_HEADER.size  # 20


def serialize_record(key: int, value: bytes, wall_ms: int, coord: int) -> bytes:
    """Serialize a key|ts|value triple in canonical form."""
    return RECORD_HEADER.pack(key, wall_ms, coord, len(value)) + value


def deserialize_record(data: bytes, offset: int = 0, max_value: Optional[int] = None) -> Tuple[int, bytes, int, int, int]:
    """Parse a canonical record starting at ``offset``.

    Returns:
        (key, value, wall_ms, coord, end_offset)

    Raises:
        ValueError: If the buffer is too short or the value length exceeds ``max_value``.
    """
    if len(data) - offset < RECORD_HEADER_SIZE:
        raise ValueError("record header truncated")
    key, wall_ms, coord, length = RECORD_HEADER.unpack_from(data, offset)
    if max_value is not None and length > max_value:
        raise ValueError(f"value length {length} exceeds {max_value}")
    start = offset + RECORD_HEADER_SIZE
    end = start + length
    if end > len(data):
        raise ValueError("record value truncated")
    return key, bytes(data[start:end]), wall_ms, coord, end


def crc32(data: bytes) -> int:
    """CRC-32 (IEEE polynomial) as an unsigned 32-bit integer."""
    return zlib.crc32(data) & 0xFFFFFFFF
