"""Per-type request queues, each drained by its own worker pool."""

import logging
import threading
from collections import deque
from enum import Enum
from typing import Callable, Deque, Dict

from core.runtime import Runtime

logger = logging.getLogger(__name__)


class QueueKind(str, Enum):
    """Request classes that get separate queues."""

    READ = "read"
    PUT = "put"
    TS = "ts"


class _Queue:
    __slots__ = ("capacity", "workers", "waiting", "active", "rejected", "served")

    def __init__(self, capacity: int, workers: int):
        self.capacity = capacity
        self.workers = workers
        self.waiting: Deque[Callable[[], None]] = deque()
        self.active = 0
        self.rejected = 0
        self.served = 0


class RequestQueues:
    """Read, put and ts queues with bounded waiting room and worker limits.

    A full queue rejects immediately; other queues are unaffected. ``clear``
    drops all waiting work and detaches in-flight workers (used on restart).
    """

    def __init__(
        self,
        runtime: Runtime,
        capacities: Dict[str, int],
        workers: Dict[str, int],
        service_delay_ms: Callable[[], float] = lambda: 0.0,
    ):
        self.runtime = runtime
        self.service_delay_ms = service_delay_ms
        self._queues = {kind: _Queue(capacities[kind.value], workers[kind.value]) for kind in QueueKind}
        self._lock = threading.Lock()
        self._generation = 0

    def submit(self, kind: QueueKind, job: Callable[[], None]) -> bool:
        """Admit ``job`` to its queue. Returns False (BUSY) when the queue is full."""
        with self._lock:
            queue = self._queues[kind]
            if len(queue.waiting) >= queue.capacity:
                queue.rejected += 1
                logger.debug("%s queue full (%d waiting)", kind.value, len(queue.waiting))
                return False
            queue.waiting.append(job)
            ready = self._take_ready(kind)
        self._dispatch(kind, ready)
        return True

    def _take_ready(self, kind: QueueKind):
        queue = self._queues[kind]
        ready = []
        while queue.active < queue.workers and queue.waiting:
            queue.active += 1
            ready.append(queue.waiting.popleft())
        return [(job, self._generation) for job in ready]

    def _dispatch(self, kind: QueueKind, ready) -> None:
        for job, generation in ready:
            self.runtime.execute(lambda job=job, generation=generation: self._run(kind, job, generation),
                                 self.service_delay_ms())

    def _run(self, kind: QueueKind, job: Callable[[], None], generation: int) -> None:
        try:
            if generation == self._generation:
                job()
        finally:
            ready = []
            with self._lock:
                if generation == self._generation:
                    queue = self._queues[kind]
                    queue.active -= 1
                    queue.served += 1
                    ready = self._take_ready(kind)
            self._dispatch(kind, ready)

    def clear(self) -> None:
        """Drop waiting work and forget in-flight workers."""
        with self._lock:
            self._generation += 1
            for queue in self._queues.values():
                queue.waiting.clear()
                queue.active = 0

    def depths(self) -> Dict[str, dict]:
        with self._lock:
            return {
                kind.value: {
                    "waiting": len(q.waiting),
                    "active": q.active,
                    "capacity": q.capacity,
                    "workers": q.workers,
                    "rejected": q.rejected,
                    "served": q.served,
                }
                for kind, q in self._queues.items()
            }
