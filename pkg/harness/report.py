"""Availability report: success rate and latency percentiles per run phase."""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from harness.history import OpHistory, OpRecord
from harness.scenario import EventKind, FaultEvent

NORMAL = "normal"
FAULT = "fault"
RECOVERY = "recovery"
PHASES = (NORMAL, FAULT, RECOVERY)


@dataclass(frozen=True)
class Window:
    start_ms: float
    end_ms: float
    label: str

    def contains(self, t: float) -> bool:
        return self.start_ms <= t < self.end_ms


def fault_windows(schedule: List[FaultEvent], run_end_ms: float, disturbance_ms: float) -> List[Window]:
    """Turn the schedule into [start, end) fault windows, relative to run start.

    KILL and CRASH_POINT last until the brick's next RESTART (or the end of the
    run); STUTTER and PARTITION last their duration; a non-zero SKEW lasts
    until the same dlib is skewed back to zero; JOIN and SPLIT count as a
    disturbance for ``disturbance_ms``.
    """
    windows: List[Window] = []
    for index, event in enumerate(schedule):
        end: Optional[float] = None
        if event.kind in (EventKind.KILL, EventKind.CRASH_POINT):
            end = next((e.at_ms for e in schedule[index + 1:]
                        if e.kind == EventKind.RESTART and e.brick == event.brick), run_end_ms)
        elif event.kind in (EventKind.STUTTER, EventKind.PARTITION):
            end = event.at_ms + event.duration_ms
        elif event.kind == EventKind.SKEW and event.offset_ms:
            end = next((e.at_ms for e in schedule[index + 1:]
                        if e.kind == EventKind.SKEW and e.dlib == event.dlib and not e.offset_ms), run_end_ms)
        elif event.kind in (EventKind.JOIN, EventKind.SPLIT):
            end = event.at_ms + disturbance_ms
        if end is not None:
            windows.append(Window(event.at_ms, max(end, event.at_ms), event.kind.value))
    return windows


def classify(t: float, windows: List[Window], recovery_ms: float) -> str:
    if any(w.contains(t) for w in windows):
        return FAULT
    if any(w.end_ms <= t < w.end_ms + recovery_ms for w in windows):
        return RECOVERY
    return NORMAL


def _percentiles(latencies: List[float]) -> Dict[str, Optional[float]]:
    if not latencies:
        return {"p50_ms": None, "p95_ms": None, "p99_ms": None}
    values = np.asarray(latencies, dtype=float)
    p50, p95, p99 = np.percentile(values, [50, 95, 99])
    return {"p50_ms": round(float(p50), 3), "p95_ms": round(float(p95), 3), "p99_ms": round(float(p99), 3)}


def summarize(records: List[OpRecord]) -> dict:
    """Count, success fraction and latency percentiles for a set of ops."""
    total = len(records)
    ok = sum(1 for r in records if r.ok)
    out = {
        "ops": total,
        "succeeded": ok,
        "success_rate": round(ok / total, 6) if total else None,
        **_percentiles([r.return_ms - r.invoke_ms for r in records]),
        "by_kind": {},
    }
    for kind in sorted({r.kind for r in records}):
        subset = [r for r in records if r.kind == kind]
        hits = sum(1 for r in subset if r.ok)
        out["by_kind"][kind] = {
            "ops": len(subset),
            "success_rate": round(hits / len(subset), 6),
            **_percentiles([r.return_ms - r.invoke_ms for r in subset]),
        }
    return out


def availability_report(history: OpHistory, schedule: List[FaultEvent], start_ms: float = 0.0,
                        run_end_ms: Optional[float] = None, recovery_ms: float = 4000.0,
                        disturbance_ms: float = 6000.0) -> dict:
    """Partition client ops (final reads excluded) into phases by invoke time."""
    records = [r for r in history.completed() if not r.final]
    if run_end_ms is None:
        run_end_ms = max((r.return_ms - start_ms for r in records), default=0.0)
    windows = fault_windows(schedule, run_end_ms, disturbance_ms)
    phases: Dict[str, List[OpRecord]] = {phase: [] for phase in PHASES}
    for record in records:
        phases[classify(record.invoke_ms - start_ms, windows, recovery_ms)].append(record)
    return {
        "overall": summarize(records),
        "phases": {phase: summarize(items) for phase, items in phases.items()},
        "windows": [{"label": w.label, "start_ms": w.start_ms, "end_ms": w.end_ms} for w in windows],
    }

