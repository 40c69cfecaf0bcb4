"""Periodic liveness and RGID announcements."""

import logging
from typing import Callable, List, Optional

from core.runtime import Runtime, TimerHandle
from wire.messages import Beacon

logger = logging.getLogger(__name__)

BeaconSink = Callable[[Beacon], None]


class BeaconEmitter:
    """Sends ``make_beacon()`` to every sink each ``period_ms``.

    Send failures are swallowed; the next period retries.
    """

    def __init__(self, runtime: Runtime, period_ms: float, make_beacon: Callable[[], Beacon], sinks: List[BeaconSink]):
        self.runtime = runtime
        self.period_ms = period_ms
        self.make_beacon = make_beacon
        self.sinks = list(sinks)
        self.sent = 0
        self._timer: Optional[TimerHandle] = None
        self._running = False

    def start(self) -> None:
        self._running = True
        self.emit_now()
        self._schedule()

    def stop(self) -> None:
        self._running = False
        if self._timer is not None:
            self._timer.cancel()
            self._timer = None

    @property
    def running(self) -> bool:
        return self._running

    def _schedule(self) -> None:
        self._timer = self.runtime.call_later(self.period_ms, self._tick)

    def _tick(self) -> None:
        if not self._running:
            return
        self.emit_now()
        self._schedule()

    def emit_now(self) -> None:
        """Send one beacon immediately (also used when the announced set changes)."""
        if not self._running:
            return
        beacon = self.make_beacon()
        for sink in self.sinks:
            try:
                sink(beacon)
            except Exception as e:
                logger.debug("beacon sink failed: %s", e)
        self.sent += 1
