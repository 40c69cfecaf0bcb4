"""History checker for the store's operational guarantees.

C1 quorum freshness: a get invoked after a put's ack returns ts >= that put's ts.
C2 per-key monotonicity: a get invoked after another get returned sees ts >= it.
C3 value integrity: every returned (value, ts) was written by some put, and
   NOT_FOUND always carries BOTTOM.
C4 durability: the final read of each key returns ts >= its newest acked put.

These are deliberately weaker than linearizability.
"""

import bisect
from dataclasses import dataclass, field
from typing import Dict, List, Set, Tuple

from core.types import BOTTOM, Timestamp
from dlib.results import OpStatus
from harness.history import OpHistory, OpRecord


@dataclass(frozen=True)
class Violation:
    check: str
    key: int
    detail: str
    witnesses: Tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"check": self.check, "key": self.key, "detail": self.detail, "witnesses": list(self.witnesses)}


@dataclass
class Verdict:
    violations: List[Violation] = field(default_factory=list)
    checked_gets: int = 0
    checked_keys: int = 0

    @property
    def passed(self) -> bool:
        return not self.violations

    def by_check(self) -> Dict[str, int]:
        counts = {"C1": 0, "C2": 0, "C3": 0, "C4": 0}
        for violation in self.violations:
            counts[violation.check] += 1
        return counts

    def to_dict(self) -> dict:
        return {
            "verdict": "pass" if self.passed else "fail",
            "checked_gets": self.checked_gets,
            "checked_keys": self.checked_keys,
            "counts": self.by_check(),
            "violations": [v.to_dict() for v in self.violations],
        }


def _prefix_max(records: List[OpRecord]) -> Tuple[List[float], List[Tuple[Timestamp, int]]]:
    """Return times (sorted) and running max (ts, op_id) over records sorted by return time."""
    ordered = sorted(records, key=lambda r: (r.return_ms, r.op_id))
    times, best = [], []
    current = (BOTTOM, -1)
    for record in ordered:
        if record.timestamp > current[0]:
            current = (record.timestamp, record.op_id)
        times.append(record.return_ms)
        best.append(current)
    return times, best


def _newest_before(times: List[float], best: List[Tuple[Timestamp, int]], instant: float) -> Tuple[Timestamp, int]:
    index = bisect.bisect_left(times, instant)
    return best[index - 1] if index else (BOTTOM, -1)


def check_history(history: OpHistory) -> Verdict:
    """Check C1-C4 over a complete history; violations are the output."""
    verdict = Verdict()
    written: Set[Tuple[int, str, Timestamp]] = set()
    for put in history.puts():
        if put.value is not None:
            written.add((put.key, put.value, put.timestamp))

    for key, records in sorted(history.by_key().items()):
        verdict.checked_keys += 1
        acked = [r for r in records if r.acked_put]
        gets = [r for r in records if r.kind == "get" and r.ok]
        put_times, put_best = _prefix_max(acked)
        get_times, get_best = _prefix_max(gets)

        for get in sorted(gets, key=lambda r: r.op_id):
            verdict.checked_gets += 1
            ts = get.timestamp

            newest, put_id = _newest_before(put_times, put_best, get.invoke_ms)
            if newest > ts:
                verdict.violations.append(Violation(
                    "C1", key, f"get {get.op_id} returned {ts} after put {put_id} acked {newest}", (put_id, get.op_id)))

            seen, get_id = _newest_before(get_times, get_best, get.invoke_ms)
            if seen > ts:
                verdict.violations.append(Violation(
                    "C2", key, f"get {get.op_id} returned {ts} after get {get_id} returned {seen}", (get_id, get.op_id)))

            if get.status == OpStatus.NOT_FOUND.value:
                if not ts.is_bottom or get.value is not None:
                    verdict.violations.append(Violation(
                        "C3", key, f"get {get.op_id} is NOT_FOUND with ts {ts}", (get.op_id,)))
            elif (key, get.value, ts) not in written:
                verdict.violations.append(Violation(
                    "C3", key, f"get {get.op_id} returned a value at {ts} that no put wrote", (get.op_id,)))

        if acked:
            newest = max(r.timestamp for r in acked)
            newest_id = max(acked, key=lambda r: r.timestamp).op_id
            finals = [r for r in records if r.final]
            if not finals:
                verdict.violations.append(Violation(
                    "C4", key, f"no final read for key with acked put at {newest}", (newest_id,)))
            for final in finals:
                if not final.ok or final.timestamp < newest:
                    verdict.violations.append(Violation(
                        "C4", key, f"final read {final.op_id} returned {final.status} {final.timestamp}, "
                                   f"acked put {newest_id} has {newest}", (newest_id, final.op_id)))
    return verdict
