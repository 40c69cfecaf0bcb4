"""Statistical failure detector for fail-stop and fail-stutter bricks.

Fail-stop: an endpoint missed ``beacon_miss_threshold`` beacon periods or
refused a connection during the window.

Fail-stutter: within a replica group and op kind, an endpoint's window median
latency exceeds its peers' median by ``k`` times the peers' MAD (floored at
``mad_floor_ms``) for ``consecutive_required`` windows in a row.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from config import DetectorConfig
from core.types import Endpoint, Rgid
from dlib.stats import LatencySample

logger = logging.getLogger(__name__)


class SuspicionKind(str, Enum):
    FAIL_STOP = "fail_stop"
    FAIL_STUTTER = "fail_stutter"


@dataclass(frozen=True)
class Suspicion:
    endpoint: Endpoint
    kind: SuspicionKind
    detail: str = ""

    def to_dict(self) -> dict:
        return {"endpoint": str(self.endpoint), "kind": self.kind.value, "detail": self.detail}


@dataclass
class DetectorReport:
    """Output of one evaluation window."""

    at_ms: float
    suspicions: List[Suspicion] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    medians: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "at_ms": self.at_ms,
            "suspicions": [s.to_dict() for s in self.suspicions],
            "notes": list(self.notes),
            "medians": self.medians,
        }


def median_and_mad(values: Iterable[float]) -> Tuple[float, float]:
    """Median and median absolute deviation."""
    arr = np.asarray(list(values), dtype=float)
    median = float(np.median(arr))
    return median, float(np.median(np.abs(arr - median)))


def window_medians(
    stats: Mapping[Tuple[Endpoint, str], List[LatencySample]],
    since_ms: float,
    min_samples: int,
) -> Dict[Tuple[Endpoint, str], float]:
    """Median latency per (endpoint, kind) over samples newer than ``since_ms``."""
    out = {}
    for key, samples in stats.items():
        values = [s.elapsed_ms for s in samples if s.at_ms > since_ms and not s.refused]
        if len(values) >= min_samples:
            out[key] = float(np.median(values))
    return out


class FailureDetector:
    """Evaluates one window at a time; keeps streaks and cooldowns between windows."""

    def __init__(self, config: Optional[DetectorConfig] = None):
        self.config = config or DetectorConfig()
        self._streak: Dict[Endpoint, int] = defaultdict(int)
        self._cooldown: Dict[Endpoint, int] = {}

    def evaluate_bricks(
        self,
        stats: Mapping[Tuple[Endpoint, str], List[LatencySample]],
        last_heard: Mapping[Endpoint, float],
        groups: Mapping[Rgid, List[Endpoint]],
        now_ms: float,
    ) -> DetectorReport:
        cfg = self.config
        report = DetectorReport(at_ms=now_ms)
        since = now_ms - cfg.window_ms

        cooling = set()
        for endpoint in list(self._cooldown):
            self._cooldown[endpoint] -= 1
            if self._cooldown[endpoint] < 0:
                del self._cooldown[endpoint]
            else:
                cooling.add(endpoint)

        flagged: Dict[Endpoint, Suspicion] = {}

        # Fail-stop: silence or refused connections.
        for endpoint, heard_ms in last_heard.items():
            missed = int((now_ms - heard_ms) // cfg.beacon_period_ms)
            if missed >= cfg.beacon_miss_threshold:
                flagged[endpoint] = Suspicion(endpoint, SuspicionKind.FAIL_STOP, f"{missed} beacons missed")
        for (endpoint, _kind), samples in stats.items():
            if endpoint not in flagged and any(s.refused and s.at_ms > since for s in samples):
                flagged[endpoint] = Suspicion(endpoint, SuspicionKind.FAIL_STOP, "connection refused")

        # Fail-stutter: compare against peers in the same group and op kind.
        medians = window_medians(stats, since, cfg.min_samples)
        for (endpoint, kind), value in medians.items():
            report.medians.setdefault(str(endpoint), {})[kind] = round(value, 3)

        anomalous: Dict[Endpoint, str] = {}
        for rgid, members in groups.items():
            if len(members) < 2:
                report.notes.append(f"stutter detection disabled for {rgid}: fewer than 2 bricks")
                continue
            kinds = {kind for (endpoint, kind) in medians if endpoint in members}
            for kind in sorted(kinds):
                for endpoint in members:
                    mine = medians.get((endpoint, kind))
                    peers = [medians[(p, kind)] for p in members if p != endpoint and (p, kind) in medians]
                    if mine is None or not peers:
                        continue
                    baseline, mad = median_and_mad(peers)
                    threshold = baseline + cfg.k * max(mad, cfg.mad_floor_ms)
                    if mine > threshold:
                        anomalous[endpoint] = f"{kind} median {mine:.2f} ms > {threshold:.2f} ms in {rgid}"

        for endpoint in set(self._streak) | set(anomalous):
            if endpoint in anomalous:
                self._streak[endpoint] += 1
            else:
                self._streak.pop(endpoint, None)
                continue
            if self._streak[endpoint] >= cfg.consecutive_required and endpoint not in flagged:
                flagged[endpoint] = Suspicion(endpoint, SuspicionKind.FAIL_STUTTER, anomalous[endpoint])

        for endpoint, suspicion in sorted(flagged.items()):
            if endpoint in cooling:
                continue
            self._streak.pop(endpoint, None)
            self._cooldown[endpoint] = self.config.cooldown_windows
            report.suspicions.append(suspicion)
            logger.warning("suspect %s: %s (%s)", endpoint, suspicion.kind.value, suspicion.detail)
        return report
