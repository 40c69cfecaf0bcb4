"""The brick: durable replica server for one or more replica groups."""

import logging
import threading
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple

from brick.beacon import BeaconEmitter, BeaconSink
from brick.queues import QueueKind, RequestQueues
from config import BrickConfig
from core.errors import BrickCrashed, CorruptRecord, StorageIOError
from core.runtime import Runtime
from core.types import BOTTOM, Record, Rgid, Timestamp
from storage.backend import StorageBackend
from wire.messages import (
    END_OF_KEYS,
    AnnounceRgids,
    Beacon,
    BeaconRequest,
    CtlAck,
    ErrorReply,
    KeysReply,
    Message,
    ReadTsRequest,
    ReadValRequest,
    RestartBrick,
    ScanKeysRequest,
    Status,
    TsReply,
    ValReply,
    WithdrawRgids,
    WriteReply,
    WriteRequest,
    absent_reply,
)

logger = logging.getLogger(__name__)

LOCK_STRIPES = 64
Reply = Callable[[Message], None]


class CrashPoint(str, Enum):
    """Steps of the write path where a simulated crash can be armed."""

    BEFORE_DURABLE_WRITE = "before_durable_write"
    AFTER_DURABLE_WRITE = "after_durable_write"
    AFTER_CACHE_UPDATE = "after_cache_update"


class Brick:
    """Storage server: write / read_val / read_ts plus the control channel.

    The timestamp cache is only ever updated after the durable write it
    describes, so a cached ts never exceeds the stored one.
    """

    def __init__(
        self,
        config: BrickConfig,
        backend: StorageBackend,
        runtime: Runtime,
        beacon_sinks: Iterable[BeaconSink] = (),
        restarter=None,
        reopen: Optional[Callable[[], StorageBackend]] = None,
    ):
        self.config = config
        self.endpoint = config.endpoint
        self.backend = backend
        self.runtime = runtime
        self.restarter = restarter
        self._reopen = reopen
        self.service_delay_ms = 0.0
        self.on_crash: Optional[Callable[[str], None]] = None

        self._rgids: Set[Rgid] = set(config.announced_rgids)
        self._rgid_lock = threading.Lock()
        self._stripes = [threading.Lock() for _ in range(LOCK_STRIPES)]
        self._cache: Dict[int, Timestamp] = {}
        self._armed: Set[str] = set()
        self.running = False
        self.restarts = 0
        self.counters = {"stored": 0, "stale_ignored": 0, "timestamp_error": 0, "corrupt": 0, "busy": 0}

        self.queues = RequestQueues(
            runtime, config.queue_capacities, config.worker_counts, lambda: self.service_delay_ms,
        )
        self._start_ms = 0
        self._beacon_count = 0
        self.beacons = BeaconEmitter(runtime, config.beacon_period_ms, self.make_beacon, list(beacon_sinks))

    # ---- lifecycle -----------------------------------------------------

    def start(self) -> None:
        self._start_ms = int(self.runtime.now_ms())
        self._beacon_count = 0
        self.running = True
        self.beacons.start()
        logger.info("brick %s serving %s (%d records)", self.endpoint, self.rgid_list(), len(self.backend))

    def stop(self) -> None:
        """Stop serving and beaconing; durable state is untouched."""
        self.running = False
        self.beacons.stop()
        self.queues.clear()
        logger.info("brick %s stopped", self.endpoint)

    def restart_self(self) -> None:
        """Discard all volatile state and serve again straight away.

        No log replay and no catch-up: the durable store is reopened as is and
        stale keys are repaired later by coordinators' reads.
        """
        self.stop()
        self._cache = {}
        self._armed.clear()
        self.service_delay_ms = 0.0
        if self._reopen is not None:
            self.backend.close()
            self.backend = self._reopen()
        self.restarts += 1
        self.start()

    def arm_crash(self, step: str) -> None:
        """Crash the next write that reaches ``step``."""
        self._armed.add(CrashPoint(step).value)

    def _crash_point(self, step: CrashPoint) -> None:
        if step.value in self._armed:
            self._armed.discard(step.value)
            self.running = False
            self.beacons.stop()
            raise BrickCrashed(step.value)

    # ---- announcements -------------------------------------------------

    def rgid_list(self) -> List[Rgid]:
        with self._rgid_lock:
            return sorted(self._rgids, key=lambda r: (r.length, r.suffix))

    def announce(self, rgids: Iterable[Rgid]) -> None:
        with self._rgid_lock:
            before = set(self._rgids)
            self._rgids.update(rgids)
            changed = self._rgids != before
        if changed:
            logger.info("brick %s now announces %s", self.endpoint, self.rgid_list())
            self.beacons.emit_now()

    def withdraw(self, rgids: Iterable[Rgid]) -> None:
        with self._rgid_lock:
            before = set(self._rgids)
            self._rgids.difference_update(rgids)
            changed = self._rgids != before
        if changed:
            logger.info("brick %s now announces %s", self.endpoint, self.rgid_list())
            self.beacons.emit_now()

    def make_beacon(self) -> Beacon:
        self._beacon_count += 1
        return self._beacon(self._beacon_count)

    def _beacon(self, count: int) -> Beacon:
        return Beacon(
            sender=self.endpoint,
            sequence=(self._start_ms << 16) + count,
            rgids=tuple(self.rgid_list()),
            sender_time_ms=int(self.runtime.now_ms()),
        )

    # ---- data operations -----------------------------------------------

    def _stripe(self, key: int) -> threading.Lock:
        return self._stripes[key % LOCK_STRIPES]

    def check_rgid_authority(self, key: int) -> bool:
        """True iff some announced Rgid matches the key's low-order bits."""
        with self._rgid_lock:
            return any(r.matches(key) for r in self._rgids)

    def _durable_ts(self, key: int) -> Timestamp:
        try:
            record = self.backend.fetch(key)
        except CorruptRecord as e:
            self.counters["corrupt"] += 1
            logger.warning("brick %s: %s; treating as absent", self.endpoint, e)
            self._cache.pop(key, None)
            return BOTTOM
        return BOTTOM if record is None else record.ts

    def brick_write(self, key: int, value: bytes, ts: Timestamp) -> Status:
        """Store ``value`` if ``ts`` is newer than what is on disk.

        Returns STORED, STALE_IGNORED (older within delta_ts_ms, or equal) or
        TIMESTAMP_ERROR (older by more than delta_ts_ms).
        """
        if len(value) > self.backend.record_payload_size:
            return Status.RECORD_TOO_LARGE
        if ts.is_bottom:
            return Status.PROTOCOL_ERROR
        with self._stripe(key):
            current = self._durable_ts(key)
            if ts > current:
                self._crash_point(CrashPoint.BEFORE_DURABLE_WRITE)
                try:
                    self.backend.durable_put(Record.create(key, value, ts))
                except StorageIOError as e:
                    logger.error("brick %s: %s", self.endpoint, e)
                    return Status.IO_ERROR
                self._crash_point(CrashPoint.AFTER_DURABLE_WRITE)
                self._cache[key] = ts
                self._crash_point(CrashPoint.AFTER_CACHE_UPDATE)
                self.counters["stored"] += 1
                return Status.STORED
            if current.wall_ms - ts.wall_ms > self.config.delta_ts_ms:
                self.counters["timestamp_error"] += 1
                logger.info("brick %s: write of key %d at %s is older than %s", self.endpoint, key, ts, current)
                return Status.TIMESTAMP_ERROR
            self.counters["stale_ignored"] += 1
            return Status.STALE_IGNORED

    def brick_read_val(self, key: int) -> Tuple[Optional[bytes], Timestamp]:
        """Durable value and ts; (None, BOTTOM) if absent.

        Raises:
            CorruptRecord: If the stored record fails its checksum.
        """
        record = self.backend.fetch(key)
        if record is None:
            return None, BOTTOM
        return record.value, record.ts

    def brick_read_ts(self, key: int) -> Timestamp:
        """Cached ts, filling the cache from disk on a miss."""
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        with self._stripe(key):
            cached = self._cache.get(key)
            if cached is not None:
                return cached
            record = self.backend.fetch(key)
            ts = BOTTOM if record is None else record.ts
            if record is not None:
                self._cache[key] = ts
            return ts

    def cached_ts(self, key: int) -> Optional[Timestamp]:
        return self._cache.get(key)

    def scan_keys(self, offset: int, limit: int) -> Tuple[int, Tuple[int, ...]]:
        keys = [k for k in self.backend.keys() if self.check_rgid_authority(k)]
        page = keys[offset:offset + limit]
        next_offset = offset + len(page)
        if next_offset >= len(keys):
            next_offset = END_OF_KEYS
        return next_offset, tuple(page)

    # ---- request dispatch ----------------------------------------------

    def handle_request(self, message: Message, reply: Reply) -> None:
        """Entry point for the transport."""
        if not self.running:
            return
        if isinstance(message, (RestartBrick, AnnounceRgids, WithdrawRgids, BeaconRequest)):
            self._handle_control(message, reply)
        elif isinstance(message, (WriteRequest, ReadValRequest, ReadTsRequest, ScanKeysRequest)):
            if not self._authorized(message):
                reply(_rejection(message, Status.WRONG_REPLICA_GROUP))
                return
            self.classify_and_enqueue(message, reply)
        else:
            reply(ErrorReply(Status.PROTOCOL_ERROR))

    def _authorized(self, message: Message) -> bool:
        key = getattr(message, "key", None)
        return key is None or self.check_rgid_authority(key)

    def classify_and_enqueue(self, message: Message, reply: Reply) -> bool:
        """Admit a data request to its queue, replying BUSY if it is full."""
        kind = classify(message)
        admitted = self.queues.submit(kind, lambda: self._serve(message, reply))
        if not admitted:
            self.counters["busy"] += 1
            reply(_rejection(message, Status.BUSY))
        return admitted

    def _serve(self, message: Message, reply: Reply) -> None:
        if not self.running:
            return
        if not self._authorized(message):
            reply(_rejection(message, Status.WRONG_REPLICA_GROUP))
            return
        try:
            response = self._execute(message)
        except BrickCrashed as e:
            logger.warning("brick %s crashed at %s", self.endpoint, e.step)
            if self.on_crash is not None:
                self.on_crash(e.step)
            return
        except CorruptRecord as e:
            self.counters["corrupt"] += 1
            logger.warning("brick %s: %s", self.endpoint, e)
            # The cached ts no longer describes what is on disk.
            self._cache.pop(getattr(message, "key", None), None)
            response = _rejection(message, Status.CORRUPT_RECORD)
        except StorageIOError as e:
            logger.error("brick %s: %s", self.endpoint, e)
            response = _rejection(message, Status.IO_ERROR)
        reply(response)

    def _execute(self, message: Message) -> Message:
        if isinstance(message, WriteRequest):
            return WriteReply(self.brick_write(message.key, message.value, message.ts))
        if isinstance(message, ReadValRequest):
            value, ts = self.brick_read_val(message.key)
            return absent_reply() if value is None else ValReply(ts, True, value)
        if isinstance(message, ReadTsRequest):
            return TsReply(self.brick_read_ts(message.key))
        next_offset, keys = self.scan_keys(message.offset, message.limit)
        return KeysReply(next_offset, keys)

    def _handle_control(self, message: Message, reply: Reply) -> None:
        if isinstance(message, BeaconRequest):
            reply(self._beacon(self._beacon_count))
        elif isinstance(message, AnnounceRgids):
            self.announce(message.rgids)
            reply(CtlAck(Status.OK))
        elif isinstance(message, WithdrawRgids):
            self.withdraw(message.rgids)
            reply(CtlAck(Status.OK))
        elif isinstance(message, RestartBrick):
            if self.restarter is None:
                reply(CtlAck(Status.SUPERVISOR_FAILED))
                return
            target = message.target
            self.runtime.execute(
                lambda: reply(CtlAck(self.restarter.request_restart(target, requester=str(self.endpoint)).status))
            )

    def status(self) -> dict:
        """Snapshot for the admin endpoint and ``ctl status``."""
        return {
            "endpoint": str(self.endpoint),
            "running": self.running,
            "rgids": [str(r) for r in self.rgid_list()],
            "records": len(self.backend),
            "cached_keys": len(self._cache),
            "queues": self.queues.depths(),
            "counters": dict(self.counters),
            "restarts": self.restarts,
            "beacons_sent": self.beacons.sent,
            "service_delay_ms": self.service_delay_ms,
            "restarter": self.restarter.status() if self.restarter is not None else None,
        }


def classify(message: Message) -> QueueKind:
    """read_val and key scans -> read; write -> put; read_ts -> ts."""
    if isinstance(message, WriteRequest):
        return QueueKind.PUT
    if isinstance(message, ReadTsRequest):
        return QueueKind.TS
    return QueueKind.READ


def _rejection(message: Message, status: Status) -> Message:
    if isinstance(message, WriteRequest):
        return WriteReply(status)
    return ErrorReply(status)
