"""Clock, timer and executor seam.

Bricks, Dlibs and the control plane never touch ``time`` or threads directly;
they go through a Runtime. ``ThreadRuntime`` backs real deployments, the
harness supplies a virtual-time implementation with the same contract:

- ``now_ms()`` is a float in milliseconds since the Unix epoch.
- ``call_later`` never runs ``fn`` synchronously.
- ``execute`` runs ``fn`` off the caller's stack after ``delay_ms``.
"""

import heapq
import itertools
import logging
import random
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

logger = logging.getLogger(__name__)


class TimerHandle:
    """Cancelable handle for a scheduled callback."""

    __slots__ = ("cancelled",)

    def __init__(self):
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Runtime(ABC):
    """Abstract clock + scheduler."""

    @abstractmethod
    def now_ms(self) -> float:
        """Current time in milliseconds."""

    @abstractmethod
    def call_later(self, delay_ms: float, fn: Callable[[], None]) -> TimerHandle:
        """Run ``fn`` after ``delay_ms``."""

    @abstractmethod
    def execute(self, fn: Callable[[], None], delay_ms: float = 0.0) -> None:
        """Run ``fn`` on a worker; ``delay_ms`` models slow service."""

    @property
    @abstractmethod
    def rng(self) -> random.Random:
        """Random source for sampling decisions."""


class SkewedRuntime(Runtime):
    """Wraps a runtime and offsets its clock; timers are unaffected."""

    def __init__(self, inner: Runtime, offset_ms: float = 0.0):
        self.inner = inner
        self.offset_ms = offset_ms

    def now_ms(self) -> float:
        return self.inner.now_ms() + self.offset_ms

    def call_later(self, delay_ms: float, fn: Callable[[], None]) -> TimerHandle:
        return self.inner.call_later(delay_ms, fn)

    def execute(self, fn: Callable[[], None], delay_ms: float = 0.0) -> None:
        self.inner.execute(fn, delay_ms)

    @property
    def rng(self) -> random.Random:
        return self.inner.rng


class ThreadRuntime(Runtime):
    """Wall-clock runtime: one timer thread plus a worker pool."""

    def __init__(self, max_workers: int = 64, seed: Optional[int] = None):
        self._pool = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="dstore-worker")
        self._rng = random.Random(seed)
        self._heap: list = []
        self._seq = itertools.count()
        self._cond = threading.Condition()
        self._closed = False
        self._timer_thread = threading.Thread(target=self._timer_loop, name="dstore-timers", daemon=True)
        self._timer_thread.start()

    def now_ms(self) -> float:
        return time.time() * 1000.0

    @property
    def rng(self) -> random.Random:
        return self._rng

    def call_later(self, delay_ms: float, fn: Callable[[], None]) -> TimerHandle:
        handle = TimerHandle()
        deadline = time.monotonic() + max(delay_ms, 0.0) / 1000.0
        with self._cond:
            heapq.heappush(self._heap, (deadline, next(self._seq), handle, fn))
            self._cond.notify()
        return handle

    def execute(self, fn: Callable[[], None], delay_ms: float = 0.0) -> None:
        if self._closed:
            return

        def run():
            if delay_ms > 0:
                time.sleep(delay_ms / 1000.0)
            fn()

        self._pool.submit(self._guard, run)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify()
        self._pool.shutdown(wait=False)

    def _timer_loop(self) -> None:
        while True:
            with self._cond:
                while not self._closed and (not self._heap or self._heap[0][0] > time.monotonic()):
                    timeout = self._heap[0][0] - time.monotonic() if self._heap else None
                    self._cond.wait(timeout)
                if self._closed:
                    return
                _, _, handle, fn = heapq.heappop(self._heap)
            if not handle.cancelled:
                self.execute(fn)

    @staticmethod
    def _guard(fn: Callable[[], None]) -> None:
        try:
            fn()
        except Exception:
            logger.exception("unhandled error in runtime task")
