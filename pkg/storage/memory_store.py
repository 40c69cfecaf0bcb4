"""In-memory stable storage for the simulator.

Records are held as encoded slots so tests can flip bits and see the same
CORRUPT_RECORD path as the disk store. The object outlives brick restarts in
the simulator, which is what makes it "stable".
"""

import threading
from typing import Dict, Iterator, List, Optional

from core.errors import CorruptRecord, StorageIOError
from core.types import Record
from storage.backend import StorageBackend
from storage.fixed_record_store import decode_slot, encode_slot


class MemoryStore(StorageBackend):
    """Dict of encoded slots with fault injection hooks."""

    def __init__(self, record_payload_size: int = 256):
        self.record_payload_size = record_payload_size
        self._slots: Dict[int, bytes] = {}
        self._lock = threading.Lock()
        self.fail_writes = False
        self.writes = 0

    def durable_put(self, record: Record) -> None:
        data = encode_slot(record, self.record_payload_size)
        if self.fail_writes:
            raise StorageIOError(f"injected write failure for key {record.key}")
        with self._lock:
            self._slots[record.key] = data
            self.writes += 1

    def fetch(self, key: int) -> Optional[Record]:
        with self._lock:
            raw = self._slots.get(key)
        if raw is None:
            return None
        return decode_slot(raw, self.record_payload_size, expected_key=key)

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
            return sorted(self._slots)

    def corrupt(self, key: int, bit: int = 8) -> None:
        """Flip one bit of the stored slot for ``key``."""
        with self._lock:
            raw = bytearray(self._slots[key])
            raw[bit // 8] ^= 1 << (bit % 8)
            self._slots[key] = bytes(raw)

    def durable_ts(self, key: int):
        """Stored timestamp, bypassing checksum checks (for test inspection)."""
        try:
            record = self.fetch(key)
        except CorruptRecord:
            return None
        return None if record is None else record.ts
