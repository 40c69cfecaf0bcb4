"""Core types, routing table and runtime shared by every component."""

from .errors import DStoreError, InvalidConfiguration, NoRoute
from .rate_limiter import retry_with_backoff, RateLimitConfig, TokenBucket
from .rgid_map import RgidMap, Route, rgid_lookup
from .runtime import Runtime, ThreadRuntime
from .types import (
    BOTTOM,
    Endpoint,
    Ordering,
    QuorumConfig,
    Record,
    Rgid,
    Timestamp,
    quorum_thresholds,
    quorums_intersect,
    record_checksum,
    rgid_of_key,
    ts_compare,
)

__all__ = [
    "BOTTOM",
    "DStoreError",
    "Endpoint",
    "InvalidConfiguration",
    "NoRoute",
    "Ordering",
    "QuorumConfig",
    "RateLimitConfig",
    "Record",
    "Rgid",
    "RgidMap",
    "Route",
    "Runtime",
    "ThreadRuntime",
    "Timestamp",
    "TokenBucket",
    "quorum_thresholds",
    "quorums_intersect",
    "record_checksum",
    "retry_with_backoff",
    "rgid_lookup",
    "rgid_of_key",
    "ts_compare",
]
