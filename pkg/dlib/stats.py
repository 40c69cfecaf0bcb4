"""Sliding-window request latency statistics."""

import threading
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from core.types import Endpoint

OP_KINDS = ("write", "read_val", "read_ts")


@dataclass(frozen=True)
class LatencySample:
    elapsed_ms: float
    at_ms: float
    timeout: bool = False
    refused: bool = False


class LatencyStats:
    """Per (endpoint, op kind) window of the last ``window`` samples."""

    def __init__(self, window: int = 64):
        if window < 1:
            raise ValueError("latency window must be >= 1")
        self.window = window
        self._samples: Dict[Tuple[Endpoint, str], Deque[LatencySample]] = {}
        self._last_refused: Dict[Endpoint, float] = {}
        self._lock = threading.Lock()

    def record(self, endpoint: Endpoint, kind: str, elapsed_ms: float, at_ms: float,
               timeout: bool = False, refused: bool = False) -> None:
        sample = LatencySample(elapsed_ms, at_ms, timeout, refused)
        with self._lock:
            samples = self._samples.get((endpoint, kind))
            if samples is None:
                samples = self._samples[(endpoint, kind)] = deque(maxlen=self.window)
            samples.append(sample)
            if refused:
                self._last_refused[endpoint] = at_ms

    def samples(self, endpoint: Endpoint, kind: str) -> List[LatencySample]:
        with self._lock:
            return list(self._samples.get((endpoint, kind), ()))

    def snapshot(self) -> Dict[Tuple[Endpoint, str], List[LatencySample]]:
        """Copy of every window."""
        with self._lock:
            return {k: list(v) for k, v in self._samples.items()}

    def last_refused(self, endpoint: Endpoint) -> Optional[float]:
        with self._lock:
            return self._last_refused.get(endpoint)

    def forget(self, endpoint: Endpoint) -> None:
        """Drop an endpoint's history (after it restarts)."""
        with self._lock:
            for key in [k for k in self._samples if k[0] == endpoint]:
                del self._samples[key]
            self._last_refused.pop(endpoint, None)

    def summary(self) -> dict:
        """Count, timeouts and percentiles per endpoint and kind."""
        out: Dict[str, dict] = {}
        for (endpoint, kind), samples in sorted(self.snapshot().items(), key=lambda kv: (kv[0][0], kv[0][1])):
            values = np.array([s.elapsed_ms for s in samples], dtype=float)
            out.setdefault(str(endpoint), {})[kind] = {
                "count": len(samples),
                "timeouts": sum(1 for s in samples if s.timeout),
                "refused": sum(1 for s in samples if s.refused),
                "p50_ms": round(float(np.median(values)), 3),
                "p95_ms": round(float(np.percentile(values, 95)), 3),
            }
        return out
