import pytest
from hypothesis import given
from hypothesis import strategies as st

from brick.brick import Brick, CrashPoint, classify
from brick.queues import QueueKind
from config import BrickConfig
from core.errors import CorruptRecord
from core.types import BOTTOM, Endpoint, Rgid, Timestamp
from harness.sim import SimRuntime
from storage import MemoryStore
from storage.fixed_record_store import slot_size_for
from wire.messages import (
    END_OF_KEYS,
    AnnounceRgids,
    Beacon,
    BeaconRequest,
    CtlAck,
    ErrorReply,
    KeysReply,
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
)

ROOT = Rgid(0, 0)
EP = Endpoint.parse("10.0.0.1:9000")


def make_brick(rgids=(ROOT,), **overrides):
    runtime = SimRuntime(seed=1)
    config = BrickConfig(
        endpoint=EP,
        announced_rgids=list(rgids),
        record_payload_size=overrides.pop("record_payload_size", 16),
        supervisor_command="",
        supervisor_stop_command="",
        **overrides,
    )
    store = MemoryStore(config.record_payload_size)
    beacons = []
    brick = Brick(config, store, runtime, beacon_sinks=[beacons.append])
    brick.start()
    return brick, store, runtime, beacons


@pytest.fixture
def brick():
    return make_brick()


def send(brick, runtime, message):
    replies = []
    brick.handle_request(message, replies.append)
    runtime.run_for(100)
    return replies


class TestWrite:
    @pytest.mark.parametrize("ts, status", [
        (Timestamp(100, 2), Status.STORED),
        (Timestamp(100, 1), Status.STALE_IGNORED),
        (Timestamp(99, 9), Status.STALE_IGNORED),
        (Timestamp(98, 9), Status.TIMESTAMP_ERROR),
        (Timestamp(101, 0), Status.STORED),
    ])
    def test_status_table(self, brick, ts, status):
        b, store, _, _ = brick
        assert b.brick_write(7, b"a", Timestamp(100, 1)) == Status.STORED
        assert b.brick_write(7, b"b", ts) == status
        expected = b"b" if status == Status.STORED else b"a"
        assert store.fetch(7).value == expected

    def test_wider_delta(self):
        b, *_ = make_brick(delta_ts_ms=10)
        b.brick_write(7, b"a", Timestamp(100, 1))
        assert b.brick_write(7, b"b", Timestamp(90, 1)) == Status.STALE_IGNORED
        assert b.brick_write(7, b"b", Timestamp(89, 1)) == Status.TIMESTAMP_ERROR

    def test_too_large_and_bottom(self, brick):
        b, store, _, _ = brick
        assert b.brick_write(1, b"x" * 17, Timestamp(1, 1)) == Status.RECORD_TOO_LARGE
        assert b.brick_write(1, b"x", BOTTOM) == Status.PROTOCOL_ERROR
        assert store.keys() == []

    def test_io_error(self, brick):
        b, store, _, _ = brick
        store.fail_writes = True
        assert b.brick_write(1, b"x", Timestamp(1, 1)) == Status.IO_ERROR
        assert b.cached_ts(1) is None

    @given(
        writes=st.lists(st.tuples(st.integers(1, 40), st.integers(0, 3), st.binary(max_size=16)), min_size=1, max_size=30),
        delta=st.integers(0, 5),
    )
    def test_stored_ts_is_max_of_all_writes(self, writes, delta):
        b, store, _, _ = make_brick(delta_ts_ms=delta)
        current, value = BOTTOM, None
        for wall, coord, data in writes:
            ts = Timestamp(wall, coord)
            if ts > current:
                expected = Status.STORED
                current, value = ts, data
            elif current.wall_ms - wall > delta:
                expected = Status.TIMESTAMP_ERROR
            else:
                expected = Status.STALE_IGNORED
            assert b.brick_write(7, data, ts) == expected
        assert current == max(Timestamp(w, c) for w, c, _ in writes)
        assert store.fetch(7).ts == current
        assert store.fetch(7).value == value
        assert b.brick_read_ts(7) == current

    def test_counters(self, brick):
        b, *_ = brick
        b.brick_write(1, b"x", Timestamp(5, 1))
        b.brick_write(1, b"x", Timestamp(5, 1))
        b.brick_write(1, b"x", Timestamp(1, 1))
        assert b.counters["stored"] == 1
        assert b.counters["stale_ignored"] == 1
        assert b.counters["timestamp_error"] == 1


class TestRead:
    def test_absent_key(self, brick):
        b, _, runtime, _ = brick
        assert send(b, runtime, ReadValRequest(3)) == [ValReply(BOTTOM, False, b"")]
        assert send(b, runtime, ReadTsRequest(3)) == [TsReply(BOTTOM)]

    def test_read_val_after_write(self, brick):
        b, _, runtime, _ = brick
        assert send(b, runtime, WriteRequest(3, Timestamp(10, 1), b"v")) == [WriteReply(Status.STORED)]
        assert send(b, runtime, ReadValRequest(3)) == [ValReply(Timestamp(10, 1), True, b"v")]

    def test_ts_cache_rebuilt_after_restart(self, brick):
        b, _, runtime, _ = brick
        b.brick_write(3, b"v", Timestamp(10, 1))
        assert b.cached_ts(3) == Timestamp(10, 1)
        b.restart_self()
        assert b.cached_ts(3) is None
        assert b.restarts == 1
        assert send(b, runtime, ReadTsRequest(3)) == [TsReply(Timestamp(10, 1))]
        assert b.cached_ts(3) == Timestamp(10, 1)

    def test_cache_never_ahead_of_disk(self, brick):
        b, store, _, _ = brick
        b.brick_write(3, b"v", Timestamp(10, 1))
        b.brick_write(3, b"w", Timestamp(5, 1))
        assert b.cached_ts(3) == store.fetch(3).ts

    def test_corrupt_record(self, brick):
        b, store, runtime, _ = brick
        b.brick_write(3, b"v", Timestamp(10, 1))
        store.corrupt(3, bit=8 * 21)
        assert send(b, runtime, ReadValRequest(3)) == [ErrorReply(Status.CORRUPT_RECORD)]
        # A write over a corrupt slot treats it as absent.
        assert b.brick_write(3, b"z", Timestamp(1, 1)) == Status.STORED
        assert b.brick_read_val(3) == (b"z", Timestamp(1, 1))

    def test_every_bit_flip_reads_corrupt(self):
        for bit in range(slot_size_for(16) * 8):
            b, store, runtime, _ = make_brick()
            b.brick_write(7, b"x" * 16, Timestamp(10, 1))
            store.corrupt(7, bit=bit)
            with pytest.raises(CorruptRecord):
                b.brick_read_val(7)
            assert send(b, runtime, ReadValRequest(7)) == [ErrorReply(Status.CORRUPT_RECORD)], bit

    def test_corruption_drops_cached_ts(self, brick):
        b, store, runtime, _ = brick
        b.brick_write(3, b"v", Timestamp(10, 1))
        assert b.cached_ts(3) == Timestamp(10, 1)
        store.corrupt(3, bit=8 * 22)
        assert send(b, runtime, ReadValRequest(3)) == [ErrorReply(Status.CORRUPT_RECORD)]
        assert b.cached_ts(3) is None
        assert send(b, runtime, ReadTsRequest(3)) == [ErrorReply(Status.CORRUPT_RECORD)]

    def test_scan_keys_pages(self):
        b, store, runtime, _ = make_brick(rgids=(Rgid(0, 1),))
        for key in (2, 4, 6):
            b.brick_write(key, b"v", Timestamp(1, 1))
        assert send(b, runtime, ScanKeysRequest(0, 2)) == [KeysReply(2, (2, 4))]
        assert send(b, runtime, ScanKeysRequest(2, 2)) == [KeysReply(END_OF_KEYS, (6,))]


class TestDispatch:
    def test_wrong_replica_group(self):
        b, _, runtime, _ = make_brick(rgids=(Rgid(0, 1),))
        assert send(b, runtime, WriteRequest(1, Timestamp(1, 1), b"v")) == [WriteReply(Status.WRONG_REPLICA_GROUP)]
        assert send(b, runtime, ReadValRequest(1)) == [ErrorReply(Status.WRONG_REPLICA_GROUP)]
        assert send(b, runtime, ReadValRequest(2)) == [ValReply(BOTTOM, False, b"")]

    def test_stopped_brick_is_silent(self, brick):
        b, _, runtime, _ = brick
        b.stop()
        assert send(b, runtime, ReadTsRequest(1)) == []

    def test_classify(self):
        assert classify(WriteRequest(1, Timestamp(1, 1), b"")) == QueueKind.PUT
        assert classify(ReadTsRequest(1)) == QueueKind.TS
        assert classify(ReadValRequest(1)) == QueueKind.READ
        assert classify(ScanKeysRequest(0, 1)) == QueueKind.READ

    def test_full_queue_rejects_only_its_type(self):
        b, _, runtime, _ = make_brick(
            queue_capacities={"read": 1, "put": 1, "ts": 1},
            worker_counts={"read": 1, "put": 1, "ts": 1},
        )
        b.service_delay_ms = 5.0
        replies = []
        for ts in range(1, 4):
            b.handle_request(WriteRequest(ts, Timestamp(ts, 1), b"v"), replies.append)
        assert replies == [WriteReply(Status.BUSY)]
        b.handle_request(ReadTsRequest(1), replies.append)
        runtime.run_for(100)
        assert replies.count(WriteReply(Status.STORED)) == 2
        assert TsReply(Timestamp(1, 1)) in replies or TsReply(BOTTOM) in replies
        assert b.counters["busy"] == 1
        assert b.queues.depths()["put"]["rejected"] == 1

    def test_restart_without_restarter(self, brick):
        b, _, runtime, _ = brick
        assert send(b, runtime, RestartBrick(EP)) == [CtlAck(Status.SUPERVISOR_FAILED)]


class TestCrashPoints:
    def _crash(self, step):
        b, store, runtime, _ = make_brick()
        crashed = []
        b.on_crash = crashed.append
        b.arm_crash(step)
        replies = send(b, runtime, WriteRequest(5, Timestamp(10, 1), b"v"))
        assert replies == []
        assert crashed == [step]
        assert b.running is False
        return b, store

    def test_before_durable_write(self):
        _, store = self._crash(CrashPoint.BEFORE_DURABLE_WRITE.value)
        assert store.fetch(5) is None

    def test_after_durable_write(self):
        b, store = self._crash(CrashPoint.AFTER_DURABLE_WRITE.value)
        assert store.fetch(5).ts == Timestamp(10, 1)
        assert b.cached_ts(5) is None

    def test_after_cache_update(self):
        b, store = self._crash(CrashPoint.AFTER_CACHE_UPDATE.value)
        assert store.fetch(5).ts == Timestamp(10, 1)

    def test_restart_disarms(self):
        b, store, runtime, _ = make_brick()
        b.arm_crash("before_durable_write")
        b.restart_self()
        assert send(b, runtime, WriteRequest(5, Timestamp(10, 1), b"v")) == [WriteReply(Status.STORED)]

    def test_unknown_step(self, brick):
        b, *_ = brick
        with pytest.raises(ValueError):
            b.arm_crash("halfway")


class TestBeacons:
    def test_periodic_beacons(self, brick):
        b, _, runtime, beacons = brick
        assert len(beacons) == 1
        runtime.run_for(2000)
        assert len(beacons) == 2
        assert beacons[0].sender == EP
        assert beacons[0].rgids == (ROOT,)
        assert beacons[1].sequence > beacons[0].sequence

    def test_announce_and_withdraw_beacon_immediately(self, brick):
        b, _, runtime, beacons = brick
        child = Rgid(1, 1)
        assert send(b, runtime, AnnounceRgids((child,))) == [CtlAck(Status.OK)]
        assert beacons[-1].rgids == (ROOT, child)
        assert send(b, runtime, WithdrawRgids((ROOT,))) == [CtlAck(Status.OK)]
        assert beacons[-1].rgids == (child,)
        assert len(beacons) == 3
        assert b.check_rgid_authority(1)
        assert not b.check_rgid_authority(2)

    def test_repeat_announce_is_quiet(self, brick):
        b, _, _, beacons = brick
        b.announce([ROOT])
        assert len(beacons) == 1

    def test_beacon_request_answers_current_state(self, brick):
        b, _, runtime, beacons = brick
        (reply,) = send(b, runtime, BeaconRequest())
        assert isinstance(reply, Beacon)
        assert reply.sequence == beacons[0].sequence
        assert reply.rgids == (ROOT,)

    def test_restart_bumps_sequence(self, brick):
        b, _, runtime, beacons = brick
        runtime.run_for(10)
        b.restart_self()
        assert beacons[-1].sequence > beacons[0].sequence

    def test_stop_silences(self, brick):
        b, _, runtime, beacons = brick
        b.stop()
        runtime.run_for(10000)
        assert len(beacons) == 1
