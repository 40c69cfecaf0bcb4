import os

import pytest

from core.checksum import RECORD_HEADER_SIZE
from core.errors import CorruptRecord, RecordTooLarge, StorageIOError
from core.types import Record, Timestamp
from storage import FixedRecordStore, MemoryStore
from storage.fixed_record_store import FILE_HEADER, encode_slot, slot_size_for


def rec(key, value, wall_ms, coord=1):
    return Record.create(key, value, Timestamp(wall_ms, coord))


@pytest.fixture
def path(tmp_path):
    return str(tmp_path / "brick.dat")


def flip(path, offset):
    with open(path, "r+b") as f:
        f.seek(offset)
        byte = f.read(1)[0]
        f.seek(offset)
        f.write(bytes([byte ^ 0x01]))


def test_put_fetch_and_reopen(path):
    store = FixedRecordStore(path, record_payload_size=32)
    store.durable_put(rec(7, b"a", 100))
    store.durable_put(rec(9, b"bb", 101))
    store.close()

    reopened = FixedRecordStore(path, record_payload_size=32)
    assert reopened.keys() == [7, 9]
    assert reopened.fetch(7) == rec(7, b"a", 100)
    assert reopened.fetch(1) is None
    assert len(reopened) == 2


def test_overwrite_shadows_then_frees_old_slot(path):
    store = FixedRecordStore(path, record_payload_size=16)
    store.durable_put(rec(7, b"a", 100))
    first = store.slot_offset(7)
    store.durable_put(rec(7, b"b", 200))
    assert store.slot_offset(7) != first
    # Third write reuses the slot freed by the second.
    store.durable_put(rec(7, b"c", 300))
    assert store.slot_offset(7) == first
    assert store.fetch(7).value == b"c"
    store.close()
    assert os.path.getsize(path) == FILE_HEADER.size + 2 * slot_size_for(16)


@pytest.mark.parametrize("older_first", [True, False])
def test_duplicate_slots_keep_newest(path, older_first):
    size = slot_size_for(16)
    old, new = rec(7, b"old", 1), rec(7, b"new", 2)
    first, second = (old, new) if older_first else (new, old)
    store = FixedRecordStore(path, record_payload_size=16)
    store.durable_put(first)
    store.close()
    with open(path, "ab") as f:
        f.write(encode_slot(second, 16))
    assert os.path.getsize(path) == FILE_HEADER.size + 2 * size

    reopened = FixedRecordStore(path, record_payload_size=16)
    assert reopened.fetch(7) == new
    assert reopened.keys() == [7]


def test_corrupt_slot_reported_and_repaired(path):
    store = FixedRecordStore(path, record_payload_size=16)
    store.durable_put(rec(7, b"a", 100))
    store.durable_put(rec(8, b"b", 100))
    offset = store.slot_offset(7)
    store.close()
    flip(path, offset + 1 + RECORD_HEADER_SIZE)

    reopened = FixedRecordStore(path, record_payload_size=16)
    assert reopened.keys() == [7, 8]
    with pytest.raises(CorruptRecord) as e:
        reopened.fetch(7)
    assert e.value.key == 7
    assert [r.key for r in reopened.scan()] == [8]

    reopened.durable_put(rec(7, b"fixed", 200))
    assert reopened.fetch(7).value == b"fixed"


def test_corruption_under_open_store(path):
    store = FixedRecordStore(path, record_payload_size=16)
    store.durable_put(rec(3, b"xyz", 5))
    flip(path, store.slot_offset(3) + 2)
    with pytest.raises(CorruptRecord):
        store.fetch(3)


def test_value_over_record_size(path):
    store = FixedRecordStore(path, record_payload_size=4)
    with pytest.raises(RecordTooLarge):
        store.durable_put(rec(1, b"12345", 1))
    store.durable_put(rec(1, b"1234", 1))


def test_fresh_truncates(path):
    store = FixedRecordStore(path, record_payload_size=16)
    store.durable_put(rec(1, b"a", 1))
    store.close()
    assert FixedRecordStore(path, record_payload_size=16, fresh=True).keys() == []


def test_record_size_comes_from_file(path):
    FixedRecordStore(path, record_payload_size=16).close()
    assert FixedRecordStore(path, record_payload_size=64).record_payload_size == 16


def test_foreign_file_rejected(path):
    with open(path, "wb") as f:
        f.write(b"not a brick store at all")
    with pytest.raises(StorageIOError):
        FixedRecordStore(path)


class TestMemoryStore:
    def test_put_fetch(self):
        store = MemoryStore(16)
        store.durable_put(rec(1, b"a", 1))
        store.durable_put(rec(1, b"b", 2))
        assert store.fetch(1).value == b"b"
        assert store.writes == 2
        assert store.durable_ts(1) == Timestamp(2, 1)

    def test_bit_flip(self):
        store = MemoryStore(16)
        store.durable_put(rec(1, b"a", 1))
        store.corrupt(1, bit=8 * (1 + RECORD_HEADER_SIZE))
        with pytest.raises(CorruptRecord):
            store.fetch(1)
        assert store.durable_ts(1) is None
        assert list(store.scan()) == []

    def test_injected_write_failure(self):
        store = MemoryStore(16)
        store.fail_writes = True
        with pytest.raises(StorageIOError):
            store.durable_put(rec(1, b"a", 1))
        assert store.keys() == []


FULL = b"0123456789abcdef"


def flip_bit(path, offset, bit):
    with open(path, "r+b") as f:
        f.seek(offset + bit // 8)
        byte = f.read(1)[0]
        f.seek(offset + bit // 8)
        f.write(bytes([byte ^ (1 << (bit % 8))]))


def key_after_flip(key, bit):
    """Key a slot claims once ``bit`` of the slot is flipped."""
    byte = bit // 8
    if 1 <= byte <= 4:
        return key ^ (1 << (bit % 8 + 8 * (4 - byte)))
    return key


class TestEveryBitFlip:
    SLOT_BITS = slot_size_for(16) * 8

    @pytest.mark.parametrize("value", [FULL, b"ab"])
    def test_memory_store(self, value):
        for bit in range(self.SLOT_BITS):
            store = MemoryStore(16)
            store.durable_put(rec(7, value, 100))
            store.corrupt(7, bit=bit)
            with pytest.raises(CorruptRecord) as e:
                store.fetch(7)
            assert e.value.key == 7, bit

    def test_open_disk_store(self, tmp_path):
        for bit in range(self.SLOT_BITS):
            path = str(tmp_path / f"{bit}.dat")
            store = FixedRecordStore(path, record_payload_size=16)
            store.durable_put(rec(7, FULL, 100))
            flip_bit(path, store.slot_offset(7), bit)
            with pytest.raises(CorruptRecord):
                store.fetch(7)
            store.close()

    def test_disk_store_after_reopen(self, tmp_path):
        for bit in range(self.SLOT_BITS):
            path = str(tmp_path / f"{bit}.dat")
            store = FixedRecordStore(path, record_payload_size=16)
            store.durable_put(rec(7, FULL, 100))
            offset = store.slot_offset(7)
            store.close()
            flip_bit(path, offset, bit)

            reopened = FixedRecordStore(path, record_payload_size=16)
            claimed = key_after_flip(7, bit)
            assert reopened.keys() == [claimed], bit
            with pytest.raises(CorruptRecord):
                reopened.fetch(claimed)
            assert list(reopened.scan()) == []
            reopened.close()

    def test_flag_flip_on_freed_slot_does_not_resurrect(self, path):
        store = FixedRecordStore(path, record_payload_size=16)
        store.durable_put(rec(7, b"old", 1))
        freed = store.slot_offset(7)
        store.durable_put(rec(7, b"new", 2))
        store.close()
        flip_bit(path, freed, 0)

        reopened = FixedRecordStore(path, record_payload_size=16)
        assert reopened.fetch(7).value == b"new"
