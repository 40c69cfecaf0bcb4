"""Periodic detector tick that turns suspicions into restart requests."""

import logging
import threading
from typing import Callable, List, Optional

from config import DetectorConfig
from control.detector import DetectorReport, FailureDetector, Suspicion
from core.runtime import Runtime, TimerHandle
from dlib.dlib import Dlib

logger = logging.getLogger(__name__)


class HealthMonitor:
    """Evaluates a Dlib's latency statistics every ``window_ms``.

    With ``auto_restart`` each suspicion is handed to ``Dlib.initiate_restart``
    and the suspect's latency history is dropped so the restarted brick starts
    from a clean window.
    """

    def __init__(
        self,
        dlib: Dlib,
        config: Optional[DetectorConfig] = None,
        runtime: Optional[Runtime] = None,
        auto_restart: bool = True,
    ):
        self.dlib = dlib
        self.runtime = runtime or dlib.runtime
        self.detector = FailureDetector(config)
        self.auto_restart = auto_restart
        self.reports: List[DetectorReport] = []
        self.flags: List[Suspicion] = []
        self._listeners: List[Callable[[DetectorReport], None]] = []
        self._timer: Optional[TimerHandle] = None
        self._running = False
        self._lock = threading.Lock()

    @property
    def config(self) -> DetectorConfig:
        return self.detector.config

    def add_listener(self, fn: Callable[[DetectorReport], None]) -> None:
        self._listeners.append(fn)

    def start(self) -> None:
        self._running = True
        self._schedule()

    def stop(self) -> None:
        self._running = False
        if self._timer is not None:
            self._timer.cancel()

    def _schedule(self) -> None:
        if self._running:
            self._timer = self.runtime.call_later(self.config.window_ms, self._tick)

    def _tick(self) -> None:
        try:
            self.tick()
        finally:
            self._schedule()

    def tick(self) -> DetectorReport:
        """Run one evaluation window now."""
        with self._lock:
            now = self.runtime.now_ms()
            report = self.detector.evaluate_bricks(
                self.dlib.stats.snapshot(),
                self.dlib.rgid_map.last_heard(),
                self.dlib.rgid_map.groups(),
                now,
            )
            self.reports.append(report)
            self.flags.extend(report.suspicions)
        for suspicion in report.suspicions:
            if self.auto_restart:
                self.dlib.initiate_restart(suspicion.endpoint)
                self.dlib.stats.forget(suspicion.endpoint)
        for fn in list(self._listeners):
            fn(report)
        return report

    def status(self) -> dict:
        return {
            "windows": len(self.reports),
            "flags": [s.to_dict() for s in self.flags],
            "last": self.reports[-1].to_dict() if self.reports else None,
        }
