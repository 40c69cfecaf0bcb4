"""Stable storage seam for bricks."""

from abc import ABC, abstractmethod
from typing import Iterator, List, Optional

from core.types import Record


class StorageBackend(ABC):
    """Durable record storage keyed by 32-bit key.

    ``durable_put`` returns only once the record is on stable storage.
    ``fetch`` raises ``CorruptRecord`` when the stored bytes fail their checksum.
    """

    record_payload_size: int

    @abstractmethod
    def durable_put(self, record: Record) -> None:
        """Persist ``record``, replacing any record stored for its key."""

    @abstractmethod
    def fetch(self, key: int) -> Optional[Record]:
        """Return the stored record for ``key`` or None."""

    @abstractmethod
    def scan(self) -> Iterator[Record]:
        """Every valid stored record; corrupt slots are skipped."""

    @abstractmethod
    def keys(self) -> List[int]:
        """Sorted keys with a slot, including corrupt ones."""

    def __len__(self) -> int:
        return len(self.keys())

    def close(self) -> None:
        """Release file handles."""
