"""Coordinator library: put/get over replica groups with read-repair.

Every operation is asynchronous underneath (callbacks driven by the
transport and the runtime) so the same code runs on real sockets and inside
the simulator. ``put`` and ``get`` are blocking wrappers for threaded use.
No lock is held while waiting on the network.
"""

import logging
import threading
import time
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Set

from config import DlibConfig
from control.restart import RestartOutcome
from core.errors import NoRoute
from core.rgid_map import Route, RgidMap
from core.runtime import Runtime
from core.types import BOTTOM, Endpoint, Timestamp
from dlib.results import HealthEvent, HealthKind, OpResult, OpStatus
from dlib.stats import LatencyStats
from services.alerts import send_operator_alert
from wire.messages import (
    Beacon,
    BeaconRequest,
    CtlAck,
    ErrorReply,
    Message,
    ReadTsRequest,
    ReadValRequest,
    RestartBrick,
    Status,
    TsReply,
    ValReply,
    WriteReply,
    WriteRequest,
)
from wire.transport import REFUSED, RESET, Transport

logger = logging.getLogger(__name__)

TIMEOUT = "timeout"
ResultCallback = Callable[[OpResult], None]
ReplyFn = Callable[[Optional[Message], Optional[str]], None]

# Acks that prove a brick holds ts' >= the written ts.
CONFIRMING = (Status.STORED, Status.STALE_IGNORED, Status.TIMESTAMP_ERROR)


class _Attempt:
    """Shared state for the replies of one attempt."""

    def __init__(self, outstanding: int):
        self.lock = threading.Lock()
        self.done = False
        self.outstanding = outstanding


class _PutAttempt(_Attempt):
    def __init__(self, outstanding: int):
        super().__init__(outstanding)
        self.acks = 0
        self.ts_errors = 0
        self.wrong_group = False
        self.errors: List[str] = []


class _GetAttempt(_Attempt):
    def __init__(self, outstanding: int):
        super().__init__(outstanding)
        self.value: Optional[bytes] = None
        self.value_ts = BOTTOM
        self.replies: Dict[Endpoint, Timestamp] = {}


class _WriteBack(_Attempt):
    def __init__(self, outstanding: int, confirmed: Set[Endpoint]):
        super().__init__(outstanding)
        self.confirmed = set(confirmed)


def next_highest(endpoints: Iterable[Endpoint], after: Endpoint) -> Endpoint:
    """Smallest endpoint above ``after``, wrapping to the lowest."""
    ordered = sorted(endpoints)
    for endpoint in ordered:
        if endpoint > after:
            return endpoint
    return ordered[0]


class Dlib:
    """Single-system-image hash table over quorum-replicated bricks."""

    def __init__(
        self,
        config: DlibConfig,
        transport: Transport,
        runtime: Runtime,
        rgid_map: Optional[RgidMap] = None,
        alert=send_operator_alert,
        name: str = "",
    ):
        self.config = config
        self.transport = transport
        self.runtime = runtime
        self.name = name or f"dlib-{config.coordinator_id}"
        self.alert = alert
        self.rgid_map = rgid_map or RgidMap(config.staleness_ms, config.member_expiry_ms)
        self.stats = LatencyStats(config.latency_window)
        self.malformed_beacons = 0
        self.counters = {
            "puts": 0, "gets": 0, "repairs": 0, "retries": 0,
            "timestamp_error_minority": 0, "wrong_replica_group": 0,
        }
        self._last_seq: Dict[Endpoint, int] = {}
        self._last_wall = 0
        self._ts_lock = threading.Lock()
        self._subscribers: List[Callable[[HealthEvent], None]] = []
        self._waiters: List[Callable[[], None]] = []
        self._waiters_lock = threading.Lock()
        self.rgid_map.add_listener(self._on_map_change)

    # ---- metadata ------------------------------------------------------

    def handle_beacon(self, beacon: Message) -> bool:
        """Fold a beacon into the routing table. Returns False if ignored."""
        if not isinstance(beacon, Beacon):
            self.malformed_beacons += 1
            logger.debug("%s: ignoring non-beacon %r", self.name, beacon)
            return False
        last = self._last_seq.get(beacon.sender)
        if last is not None and beacon.sequence < last:
            return False
        self._last_seq[beacon.sender] = beacon.sequence
        now = self.runtime.now_ms()
        self.rgid_map.observe(beacon.sender, beacon.rgids, now)
        self.rgid_map.expire(now)
        return True

    def bootstrap(self, endpoints: Iterable[Endpoint]) -> None:
        """Ask each endpoint for a beacon (pull mode for tools without a listener)."""
        for endpoint in endpoints:
            self._send(endpoint, BeaconRequest(), None, lambda reply, error: reply is not None and self.handle_beacon(reply))

    def subscribe(self, fn: Callable[[HealthEvent], None]) -> None:
        """Receive health events (refused connections, restart dispatches)."""
        self._subscribers.append(fn)

    def _emit(self, event: HealthEvent) -> None:
        for fn in list(self._subscribers):
            fn(event)

    def _on_map_change(self) -> None:
        with self._waiters_lock:
            waiters, self._waiters = self._waiters, []
        for waiter in waiters:
            self.runtime.execute(waiter)

    def _after_map_change(self, fn: Callable[[], None]) -> None:
        """Run ``fn`` once, on the next map change or after one beacon period."""
        guard = threading.Lock()
        fired = []

        def once():
            with guard:
                if fired:
                    return
                fired.append(True)
            fn()

        with self._waiters_lock:
            self._waiters.append(once)
        self.runtime.call_later(self.config.beacon_period_ms, once)

    def next_timestamp(self) -> Timestamp:
        """Local clock in ms with the coordinator id appended; unique per Dlib."""
        with self._ts_lock:
            wall = max(int(self.runtime.now_ms()), self._last_wall + 1)
            self._last_wall = wall
        return Timestamp(wall, self.config.coordinator_id)

    # ---- request plumbing ------------------------------------------------

    def _send(self, dest: Endpoint, message: Message, kind: Optional[str], on_result: ReplyFn) -> None:
        """Send with a timeout; records one latency sample per request."""
        start = self.runtime.now_ms()
        guard = threading.Lock()
        state = {"fired": False, "timer": None}

        def finish(reply: Optional[Message], error: Optional[str]) -> None:
            with guard:
                if state["fired"]:
                    return
                state["fired"] = True
            if state["timer"] is not None:
                state["timer"].cancel()
            self._observe(dest, kind, start, error)
            on_result(reply, error)

        state["timer"] = self.runtime.call_later(self.config.op_timeout_ms, lambda: finish(None, TIMEOUT))
        self.transport.request(dest, message, finish)

    def control_request(self, dest: Endpoint, message: Message, on_result: ReplyFn) -> None:
        """Send a control or scan message with the operation timeout; no latency sample."""
        self._send(dest, message, None, on_result)

    def _observe(self, dest: Endpoint, kind: Optional[str], start: float, error: Optional[str]) -> None:
        now = self.runtime.now_ms()
        if error in (REFUSED, RESET):
            if kind is not None:
                self.stats.record(dest, kind, now - start, now, refused=True)
            self.rgid_map.suspend(dest)
            self._emit(HealthEvent(dest, HealthKind(error), now))
        elif error == TIMEOUT:
            if kind is not None:
                self.stats.record(dest, kind, self.config.op_timeout_ms, now, timeout=True)
        elif kind is not None:
            self.stats.record(dest, kind, now - start, now)

    def _route(self, key: int) -> Route:
        return self.rgid_map.lookup(key, self.runtime.now_ms())

    # ---- put -------------------------------------------------------------

    def put_async(self, key: int, value: bytes, callback: ResultCallback) -> Timestamp:
        """Write to the whole group; complete after the first WT acks."""
        self.counters["puts"] += 1
        ts = self.next_timestamp()
        self._put_attempt(key, bytes(value), ts, callback, 1)
        return ts

    def _put_attempt(self, key: int, value: bytes, ts: Timestamp, callback: ResultCallback, attempt: int) -> None:
        try:
            route = self._route(key)
        except NoRoute as e:
            if attempt <= self.config.max_retries:
                self._after_map_change(lambda: self._put_attempt(key, value, ts, callback, attempt + 1))
            else:
                callback(OpResult(OpStatus.PUT_FAILED, key, ts=ts, error=str(e), attempts=attempt))
            return

        wt = route.quorum.wt
        if len(route.endpoints) < wt:
            callback(OpResult(OpStatus.PUT_FAILED, key, ts=ts, attempts=attempt,
                              error=f"{len(route.endpoints)} routable replicas in {route.rgid}, need {wt}"))
            return

        op = _PutAttempt(len(route.endpoints))

        def on_reply(dest: Endpoint, reply: Optional[Message], error: Optional[str]) -> None:
            status = reply.status if isinstance(reply, WriteReply) else None
            with op.lock:
                if op.done:
                    return
                op.outstanding -= 1
                if status in (Status.STORED, Status.STALE_IGNORED):
                    op.acks += 1
                elif status == Status.TIMESTAMP_ERROR:
                    op.ts_errors += 1
                else:
                    if status == Status.WRONG_REPLICA_GROUP:
                        op.wrong_group = True
                    op.errors.append(f"{dest}: {status.name if status is not None else error}")
                if op.acks >= wt:
                    outcome = OpStatus.OK
                elif op.ts_errors >= wt:
                    outcome = OpStatus.CLOCK_SKEW_REJECTED
                elif op.acks + op.outstanding < wt:
                    outcome = OpStatus.PUT_FAILED
                else:
                    return
                op.done = True

            if outcome == OpStatus.OK:
                if op.ts_errors:
                    self.counters["timestamp_error_minority"] += 1
                callback(OpResult(OpStatus.OK, key, value=value, ts=ts, attempts=attempt))
            elif outcome == OpStatus.CLOCK_SKEW_REJECTED:
                callback(OpResult(outcome, key, ts=ts, attempts=attempt,
                                  error=f"{op.ts_errors} replicas hold a newer write beyond the skew bound"))
            elif op.wrong_group and attempt <= self.config.max_retries:
                self.counters["wrong_replica_group"] += 1
                self.counters["retries"] += 1
                self._after_map_change(lambda: self._put_attempt(key, value, ts, callback, attempt + 1))
            else:
                callback(OpResult(OpStatus.PUT_FAILED, key, ts=ts, attempts=attempt,
                                  error="; ".join(op.errors) or "quorum unreachable"))

        message = WriteRequest(key, ts, value)
        for dest in route.endpoints:
            self._send(dest, message, "write", lambda reply, error, dest=dest: on_reply(dest, reply, error))

    # ---- get -------------------------------------------------------------

    def get_async(self, key: int, callback: ResultCallback, full: bool = False) -> None:
        """Quorum read with check and read-repair.

        ``full`` reads every routable replica and writes back to every lagging
        one (used by the anti-entropy sweep).
        """
        self.counters["gets"] += 1
        self._get_attempt(key, callback, 1, frozenset(), full)

    def _retry_get(self, key: int, callback: ResultCallback, attempt: int, excluded: FrozenSet[Endpoint],
                   full: bool, reason: str, wait_for_map: bool = False) -> None:
        if attempt > self.config.max_retries:
            callback(OpResult(OpStatus.GET_FAILED, key, error=reason, attempts=attempt))
            return
        self.counters["retries"] += 1
        if wait_for_map:
            self._after_map_change(lambda: self._get_attempt(key, callback, attempt + 1, frozenset(), full))
        else:
            self.runtime.execute(lambda: self._get_attempt(key, callback, attempt + 1, excluded, full))

    def _get_attempt(self, key: int, callback: ResultCallback, attempt: int,
                     excluded: FrozenSet[Endpoint], full: bool) -> None:
        try:
            route = self._route(key)
        except NoRoute as e:
            self._retry_get(key, callback, attempt, frozenset(), full, str(e), wait_for_map=True)
            return

        rt = route.quorum.rt
        candidates = sorted(e for e in route.endpoints if e not in excluded)
        if len(candidates) < rt:
            self._retry_get(key, callback, attempt, frozenset(), full,
                            f"{len(candidates)} routable replicas in {route.rgid}, need {rt}", wait_for_map=True)
            return

        sample = candidates if full else self.runtime.rng.sample(candidates, rt)
        # A full read checks every replica's durable record rather than its ts cache.
        value_reads = sample if full else sample[:1]
        value_target = sample[0]
        op = _GetAttempt(len(sample))

        def fail(dest: Endpoint, reason: str, wrong_group: bool) -> None:
            with op.lock:
                if op.done:
                    return
                op.done = True
            if wrong_group:
                self.counters["wrong_replica_group"] += 1
            self._retry_get(key, callback, attempt, excluded | {dest}, full, reason, wait_for_map=wrong_group)

        def collected(dest: Endpoint, ts: Timestamp, value: Optional[bytes], is_value: bool) -> None:
            with op.lock:
                if op.done:
                    return
                op.replies[dest] = ts
                if is_value and value is not None and (op.value is None or ts > op.value_ts):
                    op.value, op.value_ts = value, ts
                op.outstanding -= 1
                if op.outstanding:
                    return
                op.done = True
            self._check(key, route, op.value, op.value_ts, value_target, dict(op.replies),
                        callback, attempt, excluded, full)

        def on_reply(dest: Endpoint, is_value: bool, reply: Optional[Message], error: Optional[str]) -> None:
            if isinstance(reply, ValReply):
                collected(dest, reply.ts, reply.value if reply.present else None, True)
            elif isinstance(reply, TsReply):
                collected(dest, reply.ts, None, False)
            elif isinstance(reply, ErrorReply) and reply.status == Status.CORRUPT_RECORD:
                # Corrupt replicas read as never-written so the write-back heals them.
                collected(dest, BOTTOM, None, is_value)
            elif isinstance(reply, ErrorReply):
                fail(dest, f"{dest}: {reply.status.name}", reply.status == Status.WRONG_REPLICA_GROUP)
            else:
                fail(dest, f"{dest}: {error or 'unexpected reply'}", False)

        for dest in value_reads:
            self._send(dest, ReadValRequest(key), "read_val",
                       lambda reply, error, dest=dest: on_reply(dest, True, reply, error))
        for dest in sample[len(value_reads):]:
            self._send(dest, ReadTsRequest(key), "read_ts",
                       lambda reply, error, dest=dest: on_reply(dest, False, reply, error))

    def _check(self, key: int, route: Route, value: Optional[bytes], value_ts: Timestamp, value_source: Endpoint,
               replies: Dict[Endpoint, Timestamp], callback: ResultCallback, attempt: int,
               excluded: FrozenSet[Endpoint], full: bool) -> None:
        """Pick the newest ts, fetch its value if needed, then write back until WT bricks hold it."""
        winning = max(replies.values())
        if winning.is_bottom:
            callback(OpResult(OpStatus.NOT_FOUND, key, ts=BOTTOM, attempts=attempt))
            return
        confirmed = {e for e, ts in replies.items() if ts == winning}
        if value_ts == winning and value is not None:
            self._write_back(key, route, value, winning, confirmed, callback, attempt, excluded, full)
            return

        source = sorted(confirmed)[0]

        def on_fetch(reply: Optional[Message], error: Optional[str]) -> None:
            if isinstance(reply, ValReply) and reply.present and reply.ts >= winning:
                newest = {source} if reply.ts > winning else confirmed
                self._write_back(key, route, reply.value, reply.ts, newest, callback, attempt, excluded, full)
                return
            reason = f"value fetch from {source} failed: {error or reply}"
            self._retry_get(key, callback, attempt, excluded | {source}, full, reason)

        self._send(source, ReadValRequest(key), "read_val", on_fetch)

    def _write_back(self, key: int, route: Route, value: bytes, ts: Timestamp, confirmed: Set[Endpoint],
                    callback: ResultCallback, attempt: int, excluded: FrozenSet[Endpoint], full: bool) -> None:
        wt = route.quorum.wt
        lagging = [e for e in route.endpoints if e not in confirmed]
        if len(confirmed) >= wt and not (full and lagging):
            callback(OpResult(OpStatus.OK, key, value=value, ts=ts, attempts=attempt))
            return
        if not lagging:
            self._retry_get(key, callback, attempt, excluded, full,
                            f"only {len(confirmed)} replicas hold {ts}, need {wt}")
            return

        self.counters["repairs"] += len(lagging)
        op = _WriteBack(len(lagging), confirmed)

        def on_ack(dest: Endpoint, reply: Optional[Message], error: Optional[str]) -> None:
            with op.lock:
                if op.done:
                    return
                op.outstanding -= 1
                if isinstance(reply, WriteReply) and reply.status in CONFIRMING:
                    op.confirmed.add(dest)
                count = len(op.confirmed)
                if full:
                    if op.outstanding:
                        return
                    ok = count >= wt
                elif count >= wt:
                    ok = True
                elif count + op.outstanding < wt:
                    ok = False
                else:
                    return
                op.done = True
            if ok:
                callback(OpResult(OpStatus.OK, key, value=value, ts=ts, attempts=attempt, repairs=len(lagging)))
            else:
                self._retry_get(key, callback, attempt, excluded, full,
                                f"write-back reached {count} of {wt} replicas")

        message = WriteRequest(key, ts, value)
        for dest in lagging:
            self._send(dest, message, "write", lambda reply, error, dest=dest: on_ack(dest, reply, error))

    # ---- failure handling ------------------------------------------------

    def initiate_restart(self, failed: Endpoint,
                         on_done: Optional[Callable[[Optional[RestartOutcome]], None]] = None) -> Optional[Endpoint]:
        """Drop ``failed`` from routing and ask the next-highest live brick to restart it.

        Returns the chosen restarter, or None if no live brick remains.
        """
        now = self.runtime.now_ms()
        self.rgid_map.suspend(failed)
        live = [e for e in self.rgid_map.live_all(now) if e != failed]
        if not live:
            self._no_restarter(failed, now)
            if on_done is not None:
                on_done(None)
            return None

        restarter = next_highest(live, failed)
        logger.warning("%s: asking %s to restart %s", self.name, restarter, failed)
        self._emit(HealthEvent(failed, HealthKind.RESTART_DISPATCHED, now, f"restarter={restarter}"))

        def on_ack(reply: Optional[Message], error: Optional[str]) -> None:
            outcome = RestartOutcome.from_status(reply.status) if isinstance(reply, CtlAck) else None
            if outcome in (RestartOutcome.EXECUTED, RestartOutcome.DEDUPED, RestartOutcome.ESCALATED_TO_OFFLINE):
                self._restart_settled(failed, outcome, on_done)
            else:
                self._escalate(failed, restarter, on_done)

        self._send(restarter, RestartBrick(failed), None, on_ack)
        return restarter

    def _escalate(self, failed: Endpoint, restarter: Endpoint,
                  on_done: Optional[Callable[[Optional[RestartOutcome]], None]]) -> None:
        now = self.runtime.now_ms()
        self.rgid_map.suspend(restarter)
        live = [e for e in self.rgid_map.live_all(now) if e not in (failed, restarter)]
        if not live:
            self._no_restarter(failed, now)
            if on_done is not None:
                on_done(None)
            return
        successor = next_highest(live, restarter)
        logger.warning("%s: %s did not restart %s; asking %s to restart both", self.name, restarter, failed, successor)
        self._send(successor, RestartBrick(restarter), None, lambda reply, error: None)

        def on_ack(reply: Optional[Message], error: Optional[str]) -> None:
            outcome = RestartOutcome.from_status(reply.status) if isinstance(reply, CtlAck) else None
            if outcome is None or outcome == RestartOutcome.SUPERVISOR_FAILED:
                self.alert(f"restart of {failed} failed after escalation",
                           {"failed": str(failed), "restarter": str(restarter), "escalated_to": str(successor)})
            self._restart_settled(failed, outcome, on_done)

        self._send(successor, RestartBrick(failed), None, on_ack)

    def _restart_settled(self, failed: Endpoint, outcome: Optional[RestartOutcome],
                         on_done: Optional[Callable[[Optional[RestartOutcome]], None]]) -> None:
        if outcome == RestartOutcome.ESCALATED_TO_OFFLINE:
            self.rgid_map.remove(failed)
        if on_done is not None:
            on_done(outcome)

    def _no_restarter(self, failed: Endpoint, now: float) -> None:
        self._emit(HealthEvent(failed, HealthKind.NO_RESTARTER, now))
        self.alert(f"no live brick is left to restart {failed}", {"failed": str(failed), "dlib": self.name})

    # ---- blocking API --------------------------------------------------

    def _blocking_timeout_s(self) -> float:
        per_attempt = 3 * self.config.op_timeout_ms + self.config.beacon_period_ms
        return (self.config.max_retries + 2) * per_attempt / 1000.0

    def _wait(self, start: Callable[[ResultCallback], object], key: int, failure: OpStatus,
              timeout_s: Optional[float]) -> OpResult:
        done = threading.Event()
        box: List[OpResult] = []

        def on_result(result: OpResult) -> None:
            box.append(result)
            done.set()

        start(on_result)
        if not done.wait(timeout_s if timeout_s is not None else self._blocking_timeout_s()):
            return OpResult(failure, key, error="timed out waiting for completion")
        return box[0]

    def put(self, key: int, value: bytes, timeout_s: Optional[float] = None) -> OpResult:
        return self._wait(lambda cb: self.put_async(key, value, cb), key, OpStatus.PUT_FAILED, timeout_s)

    def get(self, key: int, timeout_s: Optional[float] = None, full: bool = False) -> OpResult:
        return self._wait(lambda cb: self.get_async(key, cb, full), key, OpStatus.GET_FAILED, timeout_s)

    def wait_for_routes(self, keys: Iterable[int] = (0,), timeout_s: float = 5.0) -> bool:
        """Block until every key in ``keys`` has a route (threaded use only)."""
        deadline = time.monotonic() + timeout_s
        while True:
            try:
                for key in keys:
                    self._route(key)
                return True
            except NoRoute:
                if time.monotonic() >= deadline:
                    return False
                time.sleep(0.05)

    def snapshot(self) -> dict:
        """Routing table, latency summary and counters."""
        return {
            "coordinator_id": self.config.coordinator_id,
            "rgid_map": self.rgid_map.snapshot(self.runtime.now_ms()),
            "latency": self.stats.summary(),
            "counters": dict(self.counters),
            "malformed_beacons": self.malformed_beacons,
        }
