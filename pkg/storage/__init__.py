"""Stable storage backends for bricks."""

from .backend import StorageBackend
from .fixed_record_store import FixedRecordStore
from .memory_store import MemoryStore

__all__ = [
    "StorageBackend",
    "FixedRecordStore",
    "MemoryStore",
]
