"""Online repartitioning: brick join, staged group split, split advisor and
anti-entropy sweep.

Everything runs on the Runtime with callbacks so the same plans execute on
real sockets (``ctl``) and inside the simulator. Plans never copy data: a
joining brick starts empty and is healed by quorum reads, and a split only
changes which Rgids bricks announce.
"""

import logging
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Set, Tuple

import numpy as np

from config import AdvisorConfig, BrickConfig
from core.errors import PlanError
from core.types import Endpoint, Rgid, quorums_intersect
from dlib.dlib import Dlib
from dlib.results import OpResult, OpStatus
from dlib.stats import LatencySample
from wire.messages import (
    END_OF_KEYS,
    AnnounceRgids,
    CtlAck,
    KeysReply,
    Message,
    ScanKeysRequest,
    Status,
    WithdrawRgids,
)

logger = logging.getLogger(__name__)

SCAN_PAGE = 256
SWEEP_CONCURRENCY = 16
# Beacon periods a plan waits for the map to converge before giving up.
CONVERGE_PERIODS = 10


@dataclass
class PlanResult:
    """Outcome of a join or split plan."""

    plan: str
    ok: bool
    detail: str = ""
    phases: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"plan": self.plan, "ok": self.ok, "detail": self.detail, "phases": list(self.phases)}


class PlanLock:
    """At most one repartition plan runs at a time."""

    def __init__(self):
        self._lock = threading.Lock()
        self.holder: Optional[str] = None

    def acquire(self, plan: str) -> None:
        if not self._lock.acquire(blocking=False):
            raise PlanError(f"plan {self.holder!r} is already running")
        self.holder = plan

    def release(self) -> None:
        self.holder = None
        self._lock.release()


def validate_split(parent: Rgid, members: Iterable[Endpoint],
                   assignment: Mapping[Endpoint, Iterable[Rgid]]) -> Dict[Rgid, Set[Endpoint]]:
    """Check a split assignment; returns child -> assigned endpoints.

    Raises:
        PlanError: If the assignment is incomplete or unsafe.
    """
    members = set(members)
    if not members:
        raise PlanError(f"no bricks announce {parent}")
    if parent.length >= 32:
        raise PlanError(f"cannot split {parent}: already 32 bits")
    children = parent.children()
    by_child: Dict[Rgid, Set[Endpoint]] = {child: set() for child in children}
    for endpoint, rgids in assignment.items():
        if endpoint not in members:
            raise PlanError(f"{endpoint} is not a member of {parent}")
        for rgid in rgids:
            if rgid not in by_child:
                raise PlanError(f"{rgid} is not a child of {parent}; children are {children[0]} and {children[1]}")
            by_child[rgid].add(endpoint)
    for child, assigned in by_child.items():
        if not assigned:
            raise PlanError(f"child {child} has no assigned bricks")
        if not quorums_intersect(len(members), len(assigned)):
            raise PlanError(f"child {child} with {len(assigned)} bricks cannot overlap quorums of "
                            f"{parent} with {len(members)} bricks")
    return by_child


class Repartitioner:
    """Runs join and split plans against live bricks.

    ``refresh`` is called on every poll; tools without a beacon listener pass
    one that pulls beacons so the Dlib's map keeps up.
    """

    def __init__(self, dlib: Dlib, plan_lock: Optional[PlanLock] = None,
                 refresh: Optional[Callable[[], None]] = None):
        self.dlib = dlib
        self.runtime = dlib.runtime
        self.plan_lock = plan_lock or PlanLock()
        self.refresh = refresh
        self.period_ms = dlib.config.beacon_period_ms

    # ---- plumbing ------------------------------------------------------

    def _control_all(self, sends: List[Tuple[Endpoint, Message]], on_done: Callable[[List[str]], None]) -> None:
        """Send each control message; ``on_done`` gets the list of failures."""
        if not sends:
            self.runtime.execute(lambda: on_done([]))
            return
        lock = threading.Lock()
        state = {"left": len(sends), "failures": []}

        def on_ack(dest: Endpoint, reply: Optional[Message], error: Optional[str]) -> None:
            with lock:
                if not (isinstance(reply, CtlAck) and reply.status == Status.OK):
                    state["failures"].append(f"{dest}: {error or reply}")
                state["left"] -= 1
                if state["left"]:
                    return
            on_done(state["failures"])

        for dest, message in sends:
            self.dlib.control_request(dest, message, lambda reply, error, dest=dest: on_ack(dest, reply, error))

    def _poll(self, condition: Callable[[float], bool], on_ready: Callable[[], None],
              on_timeout: Callable[[], None], interval_ms: Optional[float] = None) -> None:
        """Call ``on_ready`` once ``condition(now)`` holds, polling every ``interval_ms``."""
        interval = interval_ms or self.period_ms / 4
        deadline = self.runtime.now_ms() + CONVERGE_PERIODS * self.period_ms

        def check() -> None:
            if self.refresh is not None:
                self.refresh()
            now = self.runtime.now_ms()
            if condition(now):
                on_ready()
            elif now >= deadline:
                on_timeout()
            else:
                self.runtime.call_later(interval, check)

        self.runtime.call_later(interval, check)

    # ---- join ----------------------------------------------------------

    def join_brick(self, new: BrickConfig, group: Rgid, launch: Optional[Callable[[BrickConfig], None]] = None,
                   on_done: Optional[Callable[[PlanResult], None]] = None) -> None:
        """Bring ``new`` into ``group``; no pre-copy, reads heal it.

        Raises:
            PlanError: If another plan is running.
        """
        plan = f"join {new.endpoint} -> {group}"
        self.plan_lock.acquire(plan)
        result = PlanResult(plan, False)

        def finish(ok: bool, detail: str) -> None:
            result.ok, result.detail = ok, detail
            self.plan_lock.release()
            logger.info("%s: %s (%s)", plan, "done" if ok else "failed", detail)
            if on_done is not None:
                on_done(result)

        def wait_for_membership(failures: List[str]) -> None:
            if failures:
                finish(False, "; ".join(failures))
                return
            result.phases.append("announced")
            self._poll(
                lambda now: new.endpoint in self.dlib.rgid_map.live_endpoints(group, now),
                lambda: finish(True, f"{group} now has {self.dlib.rgid_map.group_size(group)} members"),
                lambda: finish(False, f"{new.endpoint} never appeared in {group}"),
            )

        try:
            if launch is not None:
                launch(new)
                result.phases.append("launched")
        except Exception as e:
            finish(False, f"launch failed: {e}")
            return
        logger.info("%s: launched", plan)
        if group in new.announced_rgids:
            wait_for_membership([])
        else:
            self._control_all([(new.endpoint, AnnounceRgids((group,)))], wait_for_membership)

    # ---- split ---------------------------------------------------------

    def split_group(self, parent: Rgid, assignment: Mapping[Endpoint, Iterable[Rgid]],
                    on_done: Optional[Callable[[PlanResult], None]] = None) -> None:
        """Two-phase split of ``parent`` into its children.

        Phase 1 adds the child announcements and waits until each child's
        membership matches the assignment for one beacon period. Phase 2 has
        every parent member withdraw the parent. Any failure in phase 1 reverts
        the child announcements.

        Raises:
            PlanError: If the assignment is invalid or another plan is running.
        """
        members = self.dlib.rgid_map.members(parent)
        by_child = validate_split(parent, members, assignment)
        plan = f"split {parent} -> " + ", ".join(
            f"{child}:{'+'.join(str(e) for e in sorted(eps))}" for child, eps in by_child.items()
        )
        self.plan_lock.acquire(plan)
        result = PlanResult(plan, False)
        announces = [(endpoint, AnnounceRgids(tuple(sorted(set(rgids)))))
                     for endpoint, rgids in sorted(assignment.items()) if rgids]

        def finish(ok: bool, detail: str) -> None:
            result.ok, result.detail = ok, detail
            self.plan_lock.release()
            logger.info("%s: %s (%s)", plan, "done" if ok else "aborted", detail)
            if on_done is not None:
                on_done(result)

        def revert(reason: str) -> None:
            logger.warning("%s: reverting: %s", plan, reason)
            result.phases.append("reverted")
            withdraws = [(endpoint, WithdrawRgids(msg.rgids)) for endpoint, msg in announces]
            self._control_all(withdraws, lambda failures: finish(False, reason))

        stable_since: Dict[str, Optional[float]] = {"at": None}

        def children_stable(now: float) -> bool:
            for child, assigned in by_child.items():
                live = set(self.dlib.rgid_map.live_endpoints(child, now))
                if live != assigned:
                    stable_since["at"] = None
                    return False
            if stable_since["at"] is None:
                stable_since["at"] = now
            return now - stable_since["at"] >= self.period_ms

        def phase_two() -> None:
            result.phases.append("children_stable")
            logger.info("%s: children stable, withdrawing parent", plan)
            withdraws = [(endpoint, WithdrawRgids((parent,))) for endpoint in members]
            self._control_all(withdraws, after_withdraw)

        def after_withdraw(failures: List[str]) -> None:
            result.phases.append("parent_withdrawn")
            if failures:
                # The children already route every key; a stale parent
                # announcement only widens the fallback, so report and finish.
                finish(True, "parent withdrawal incomplete: " + "; ".join(failures))
            else:
                finish(True, "split complete")

        def after_announce(failures: List[str]) -> None:
            if failures:
                revert("announce failed: " + "; ".join(failures))
                return
            result.phases.append("children_announced")
            logger.info("%s: children announced", plan)

            def timeout() -> None:
                now = self.runtime.now_ms()
                empty = [str(c) for c in by_child if not self.dlib.rgid_map.live_endpoints(c, now)]
                revert(f"child {', '.join(empty)} has no live bricks" if empty else "children never stabilized")

            self._poll(children_stable, phase_two, timeout)

        self._control_all(announces, after_announce)


# ============== advisor ==============

@dataclass(frozen=True)
class Recommendation:
    """Advice to split one group; never executed automatically."""

    action: str
    rgid: Rgid
    group_ms: float
    baseline_ms: float
    windows: int

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "rgid": str(self.rgid),
            "group_ms": round(self.group_ms, 3),
            "baseline_ms": round(self.baseline_ms, 3),
            "windows": self.windows,
        }


class RepartitionAdvisor:
    """Flags a group whose median get latency runs ``factor`` times the others'."""

    GET_KINDS = ("read_val", "read_ts")

    def __init__(self, config: Optional[AdvisorConfig] = None):
        self.config = config or AdvisorConfig()
        self._streak: Dict[Rgid, int] = defaultdict(int)

    @classmethod
    def group_medians(cls, stats: Mapping[Tuple[Endpoint, str], List[LatencySample]],
                      groups: Mapping[Rgid, List[Endpoint]], since_ms: float) -> Dict[Rgid, float]:
        out = {}
        for rgid, members in groups.items():
            values = [
                s.elapsed_ms
                for (endpoint, kind), samples in stats.items()
                if endpoint in members and kind in cls.GET_KINDS
                for s in samples
                if s.at_ms > since_ms and not s.refused
            ]
            if values:
                out[rgid] = float(np.median(values))
        return out

    def observe(self, stats: Mapping[Tuple[Endpoint, str], List[LatencySample]],
                groups: Mapping[Rgid, List[Endpoint]], since_ms: float) -> Optional[Recommendation]:
        """Evaluate one window; returns at most one recommendation."""
        medians = self.group_medians(stats, groups, since_ms)
        if len(medians) < 2:
            self._streak.clear()
            return None
        best: Optional[Recommendation] = None
        for rgid, value in sorted(medians.items()):
            others = [m for r, m in medians.items() if r != rgid]
            baseline = float(np.median(others))
            if value > self.config.factor * baseline:
                self._streak[rgid] += 1
            else:
                self._streak.pop(rgid, None)
                continue
            if self._streak[rgid] >= self.config.consecutive_windows:
                candidate = Recommendation("split", rgid, value, baseline, self._streak[rgid])
                if best is None or candidate.group_ms > best.group_ms:
                    best = candidate
        for rgid in list(self._streak):
            if rgid not in medians:
                del self._streak[rgid]
        return best


# ============== anti-entropy ==============

@dataclass
class SweepReport:
    keys: int = 0
    repaired: int = 0
    failed: List[int] = field(default_factory=list)
    scan_errors: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"keys": self.keys, "repaired": self.repaired, "failed": list(self.failed),
                "scan_errors": list(self.scan_errors)}


class AntiEntropySweep:
    """Enumerates keys on the given bricks and runs a full quorum read on each.

    Optional: normal reads already repair, the sweep only bounds convergence
    for keys nobody reads.
    """

    def __init__(self, dlib: Dlib, page: int = SCAN_PAGE, concurrency: int = SWEEP_CONCURRENCY):
        self.dlib = dlib
        self.page = page
        self.concurrency = concurrency

    def run(self, sources: Iterable[Endpoint], on_done: Callable[[SweepReport], None]) -> None:
        sources = sorted(set(sources))
        report = SweepReport()
        keys: Set[int] = set()
        lock = threading.Lock()
        pending = {"sources": len(sources)}

        def source_done() -> None:
            with lock:
                pending["sources"] -= 1
                if pending["sources"]:
                    return
            self._repair(sorted(keys), report, on_done)

        def scan(source: Endpoint, offset: int) -> None:
            def on_page(reply: Optional[Message], error: Optional[str]) -> None:
                if not isinstance(reply, KeysReply):
                    with lock:
                        report.scan_errors.append(f"{source}: {error or reply}")
                    source_done()
                    return
                with lock:
                    keys.update(reply.keys)
                if reply.next_offset == END_OF_KEYS or not reply.keys:
                    source_done()
                else:
                    scan(source, reply.next_offset)

            self.dlib.control_request(source, ScanKeysRequest(offset, self.page), on_page)

        if not sources:
            self._repair([], report, on_done)
            return
        for source in sources:
            scan(source, 0)

    def _repair(self, keys: List[int], report: SweepReport, on_done: Callable[[SweepReport], None]) -> None:
        report.keys = len(keys)
        queue = list(reversed(keys))
        lock = threading.Lock()
        state = {"active": 0, "done": False}

        def launch() -> None:
            while True:
                with lock:
                    if not queue or state["active"] >= self.concurrency:
                        finished = not queue and state["active"] == 0 and not state["done"]
                        if finished:
                            state["done"] = True
                        break
                    key = queue.pop()
                    state["active"] += 1
                self.dlib.get_async(key, lambda result, key=key: landed(key, result), full=True)
            if finished:
                logger.info("anti-entropy sweep: %d keys, %d repairs, %d failed",
                            report.keys, report.repaired, len(report.failed))
                on_done(report)

        def landed(key: int, result: OpResult) -> None:
            with lock:
                state["active"] -= 1
                report.repaired += result.repairs
                if result.status not in (OpStatus.OK, OpStatus.NOT_FOUND):
                    report.failed.append(key)
            launch()

        launch()
