"""Fixed-length record file: the default brick backend.

File layout (big-endian):
    header: magic "DSBR" | version u16 | record_payload_size u32
    slots:  flag u8 | key u32 | wall_ms i64 | coord u32 | value length u32 | value | crc32 u32 | zero padding

The flag is 0xA5 for an occupied slot and 0x00 for a free one; no single bit
flip turns one into the other. Any other flag value, a checksum mismatch or
non-zero padding makes the slot corrupt. After a reopen, a slot whose key field
was damaged is indexed, and reported corrupt, under the key it now names.

Every slot has the same size, ``1 + 20 + record_payload_size + 4``. The
directory (key -> slot) lives in memory and is rebuilt by a full scan at open.
Overwrites are shadowed: the new record goes to a free slot and is synced
before the old slot is cleared.
"""

import heapq
import logging
import os
import struct
import threading
from typing import Dict, Iterator, List, Optional, Set

from core.checksum import RECORD_HEADER, RECORD_HEADER_SIZE, crc32
from core.errors import CorruptRecord, RecordTooLarge, StorageIOError
from core.types import Record, Timestamp
from storage.backend import StorageBackend

logger = logging.getLogger(__name__)

MAGIC = b"DSBR"
VERSION = 2
FILE_HEADER = struct.Struct(">4sHI")
CRC = struct.Struct(">I")
FREE = 0x00
OCCUPIED = 0xA5


def slot_size_for(record_payload_size: int) -> int:
    return 1 + RECORD_HEADER_SIZE + record_payload_size + CRC.size


def encode_slot(record: Record, record_payload_size: int) -> bytes:
    """Serialize ``record`` into one padded slot."""
    if len(record.value) > record_payload_size:
        raise RecordTooLarge(f"value of {len(record.value)} bytes exceeds record size {record_payload_size}")
    body = record.serialize()
    slot = bytes([OCCUPIED]) + body + CRC.pack(record.checksum)
    return slot + b"\x00" * (slot_size_for(record_payload_size) - len(slot))


def slot_key(slot: bytes) -> Optional[int]:
    """Key field of a non-free slot, readable even when the slot is corrupt."""
    if len(slot) < 1 + RECORD_HEADER_SIZE or slot[0] == FREE:
        return None
    return RECORD_HEADER.unpack_from(slot, 1)[0]


def decode_slot(slot: bytes, record_payload_size: int, expected_key: Optional[int] = None) -> Optional[Record]:
    """Parse one slot.

    Returns:
        The record, or None for a free slot when no key is expected.

    Raises:
        CorruptRecord: If the flag, length, checksum or padding is wrong, or
            ``expected_key`` names a slot that reads as free.
    """
    if not slot or slot[0] == FREE:
        if expected_key is not None:
            raise CorruptRecord(expected_key, "slot reads as free")
        return None
    key = slot_key(slot)
    if key is None:
        raise CorruptRecord(expected_key, "slot truncated")
    if expected_key is not None:
        key = expected_key
    if slot[0] != OCCUPIED:
        raise CorruptRecord(key, f"bad occupancy flag 0x{slot[0]:02x}")
    _, wall_ms, coord, length = RECORD_HEADER.unpack_from(slot, 1)
    if length > record_payload_size:
        raise CorruptRecord(key, f"value length {length} exceeds record size")
    end = 1 + RECORD_HEADER_SIZE + length
    (stored_crc,) = CRC.unpack_from(slot, end)
    if crc32(slot[1:end]) != stored_crc:
        raise CorruptRecord(key)
    if any(slot[end + CRC.size:]):
        raise CorruptRecord(key, "non-zero padding")
    stored_key = RECORD_HEADER.unpack_from(slot, 1)[0]
    if stored_key != key:
        raise CorruptRecord(key, f"slot holds key {stored_key}")
    return Record(key, bytes(slot[1 + RECORD_HEADER_SIZE:end]), Timestamp(wall_ms, coord), stored_crc)


class FixedRecordStore(StorageBackend):
    """File of uniform record slots with an in-memory directory."""

    def __init__(self, path: str, record_payload_size: int = 256, fresh: bool = False):
        self.path = path
        self.record_payload_size = record_payload_size
        self._lock = threading.RLock()
        self._directory: Dict[int, int] = {}
        self._corrupt: Set[int] = set()
        self._free: List[int] = []
        self._slot_count = 0
        try:
            self._open(fresh)
        except OSError as e:
            raise StorageIOError(f"cannot open store {path}: {e}") from e

    @property
    def slot_size(self) -> int:
        return slot_size_for(self.record_payload_size)

    def _open(self, fresh: bool) -> None:
        directory = os.path.dirname(os.path.abspath(self.path))
        os.makedirs(directory, exist_ok=True)
        exists = os.path.exists(self.path) and os.path.getsize(self.path) > 0
        flags = os.O_RDWR | os.O_CREAT
        if fresh:
            flags |= os.O_TRUNC
        self._fd = os.open(self.path, flags, 0o644)
        if fresh or not exists:
            os.pwrite(self._fd, FILE_HEADER.pack(MAGIC, VERSION, self.record_payload_size), 0)
            os.fsync(self._fd)
            logger.info("initialized store %s (record size %d)", self.path, self.record_payload_size)
            return
        header = os.pread(self._fd, FILE_HEADER.size, 0)
        if len(header) < FILE_HEADER.size:
            raise StorageIOError(f"{self.path}: truncated header")
        magic, version, payload_size = FILE_HEADER.unpack(header)
        if magic != MAGIC or version != VERSION:
            raise StorageIOError(f"{self.path}: not a brick store (magic={magic!r}, version={version})")
        if payload_size != self.record_payload_size:
            logger.warning(
                "%s was created with record size %d; ignoring configured %d",
                self.path, payload_size, self.record_payload_size,
            )
            self.record_payload_size = payload_size
        self._scan_directory()

    def _offset(self, slot: int) -> int:
        return FILE_HEADER.size + slot * self.slot_size

    def _read_slot(self, slot: int) -> bytes:
        return os.pread(self._fd, self.slot_size, self._offset(slot))

    def _scan_directory(self) -> None:
        size = os.fstat(self._fd).st_size
        self._slot_count = (size - FILE_HEADER.size) // self.slot_size
        best: Dict[int, Record] = {}
        corrupt_slots: Dict[int, int] = {}
        for slot in range(self._slot_count):
            raw = self._read_slot(slot)
            try:
                record = decode_slot(raw, self.record_payload_size)
            except CorruptRecord as e:
                key = slot_key(raw)
                logger.warning("corrupt slot %d in %s: %s", slot, self.path, e)
                if key is None:
                    heapq.heappush(self._free, slot)
                else:
                    corrupt_slots.setdefault(key, slot)
                continue
            if record is None:
                heapq.heappush(self._free, slot)
                continue
            current = best.get(record.key)
            if current is None or record.ts > current.ts:
                if current is not None:
                    self._clear_slot(self._directory[record.key])
                best[record.key] = record
                self._directory[record.key] = slot
            else:
                # A crash mid-overwrite left two copies; the older one goes.
                self._clear_slot(slot)
        for key, slot in corrupt_slots.items():
            if key in self._directory:
                self._clear_slot(slot)
            else:
                self._directory[key] = slot
                self._corrupt.add(key)
        logger.info("opened store %s: %d records, %d corrupt", self.path, len(self._directory), len(self._corrupt))

    def _clear_slot(self, slot: int) -> None:
        os.pwrite(self._fd, bytes([FREE]), self._offset(slot))
        heapq.heappush(self._free, slot)

    def _allocate(self) -> int:
        if self._free:
            return heapq.heappop(self._free)
        slot = self._slot_count
        self._slot_count += 1
        return slot

    def durable_put(self, record: Record) -> None:
        data = encode_slot(record, self.record_payload_size)
        with self._lock:
            old = self._directory.get(record.key)
            slot = self._allocate()
            try:
                os.pwrite(self._fd, data, self._offset(slot))
                os.fsync(self._fd)
                if old is not None:
                    os.pwrite(self._fd, bytes([FREE]), self._offset(old))
                    os.fsync(self._fd)
            except OSError as e:
                heapq.heappush(self._free, slot)
                raise StorageIOError(f"write of key {record.key} failed: {e}") from e
            if old is not None:
                heapq.heappush(self._free, old)
            self._directory[record.key] = slot
            self._corrupt.discard(record.key)

    def fetch(self, key: int) -> Optional[Record]:
        with self._lock:
            slot = self._directory.get(key)
            if slot is None:
                return None
            try:
                raw = self._read_slot(slot)
            except OSError as e:
                raise StorageIOError(f"read of key {key} failed: {e}") from e
        record = decode_slot(raw, self.record_payload_size, expected_key=key)
        if record is None:
            raise CorruptRecord(key, "slot cleared under directory entry")
        return record

    def scan(self) -> Iterator[Record]:
        for key in self.keys():
            try:
                record = self.fetch(key)
            except CorruptRecord:
                continue
            if record is not None:
                yield record

    def keys(self) -> List[int]:
        with self._lock:
            return sorted(self._directory)

    def slot_offset(self, key: int) -> Optional[int]:
        """Byte offset of the slot holding ``key`` (used by corruption tests and tools)."""
        with self._lock:
            slot = self._directory.get(key)
        return None if slot is None else self._offset(slot)

    def close(self) -> None:
        with self._lock:
            if self._fd is not None:
                os.close(self._fd)
                self._fd = None
