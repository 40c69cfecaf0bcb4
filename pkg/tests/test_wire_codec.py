import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from core.errors import FrameTooLarge, ProtocolError, TruncatedFrame, UnknownOpcode
from core.types import BOTTOM, Endpoint, Rgid, Timestamp
from wire import (
    AnnounceRgids,
    Beacon,
    BeaconRequest,
    CtlAck,
    ErrorReply,
    FrameReader,
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
    decode,
    decode_frame,
    encode,
)
from wire.codec import MAX_FRAME, iter_frames
from wire.messages import absent_reply, reply_status

B0 = Endpoint.parse("10.0.0.1:9000")

SAMPLES = [
    WriteRequest(7, Timestamp(100, 1), b"a"),
    WriteRequest(0xFFFFFFFF, Timestamp(-5, 0), b""),
    ReadValRequest(7),
    ReadTsRequest(7),
    ScanKeysRequest(0, 128),
    BeaconRequest(),
    WriteReply(Status.STALE_IGNORED),
    ValReply(Timestamp(100, 1), True, b"a"),
    absent_reply(),
    TsReply(BOTTOM),
    KeysReply(0xFFFFFFFF, (1, 2, 3)),
    ErrorReply(Status.WRONG_REPLICA_GROUP),
    RestartBrick(B0),
    CtlAck(Status.DEDUPED),
    AnnounceRgids((Rgid(0, 1), Rgid(1, 1))),
    WithdrawRgids((Rgid(0, 0),)),
    Beacon(B0, 12, (Rgid(0, 0),), 4000),
]


@pytest.mark.parametrize("message", SAMPLES, ids=lambda m: type(m).__name__)
def test_every_message_survives_framing(message):
    assert decode(encode(message, 3)) == message


def test_read_val_frame_layout():
    frame = encode(ReadValRequest(7), request_id=1)
    assert frame == bytes.fromhex("0000000d" "02" "0000000000000001" "00000007")


def test_write_payload_is_canonical_record():
    frame = encode(WriteRequest(7, Timestamp(100, 1), b"a"))
    payload = frame[4 + 9:]
    assert payload == struct.pack(">IqII", 7, 100, 1, 1) + b"a"


def test_request_id_is_echoed():
    request_id, message, end = decode_frame(encode(TsReply(Timestamp(1, 2)), request_id=2**63))
    assert request_id == 2**63
    assert message == TsReply(Timestamp(1, 2))


def test_unknown_opcode():
    frame = struct.pack(">IBQ", 9, 0x7E, 0)
    with pytest.raises(UnknownOpcode):
        decode(frame)


def test_declared_length_over_limit():
    with pytest.raises(FrameTooLarge):
        decode(struct.pack(">I", MAX_FRAME + 1) + b"\x00" * 16)


def test_truncated_frame():
    frame = encode(ValReply(Timestamp(1, 1), True, b"xyz"))
    with pytest.raises(TruncatedFrame):
        decode(frame[:-1])


def test_trailing_payload_bytes_rejected():
    body = struct.pack(">BQ", ReadValRequest.OPCODE, 0) + struct.pack(">II", 7, 0)
    with pytest.raises(ProtocolError):
        decode(struct.pack(">I", len(body)) + body)


def test_unknown_status_code():
    body = struct.pack(">BQB", WriteReply.OPCODE, 0, 200)
    with pytest.raises(ProtocolError):
        decode(struct.pack(">I", len(body)) + body)


def test_invalid_rgid_on_wire():
    body = struct.pack(">BQH", AnnounceRgids.OPCODE, 0, 1) + struct.pack(">IB", 2, 1)
    with pytest.raises(ProtocolError):
        decode(struct.pack(">I", len(body)) + body)


def test_bad_present_flag():
    body = struct.pack(">BQ", ValReply.OPCODE, 0) + struct.pack(">qIBI", 1, 1, 2, 0)
    with pytest.raises(ProtocolError):
        decode(struct.pack(">I", len(body)) + body)


def test_frame_reader_reassembles_split_stream():
    stream = encode(ReadTsRequest(1), 1) + encode(ReadTsRequest(2), 2)
    reader = FrameReader()
    assert reader.feed(stream[:5]) == []
    assert reader.pending == 5
    frames = reader.feed(stream[5:])
    assert frames == [(1, ReadTsRequest(1)), (2, ReadTsRequest(2))]
    assert reader.pending == 0


@given(st.binary(max_size=64), st.integers(min_value=1, max_value=63))
def test_frame_reader_any_chunking(value, cut):
    stream = encode(WriteRequest(9, Timestamp(5, 2), value), 4) * 2
    cut = min(cut, len(stream))
    reader = FrameReader()
    frames = reader.feed(stream[:cut]) + reader.feed(stream[cut:])
    assert [m for _, m in frames] == [WriteRequest(9, Timestamp(5, 2), value)] * 2


def test_iter_frames_stops_at_partial_frame():
    data = encode(CtlAck(Status.EXECUTED), 1) + encode(ReadValRequest(3), 2)[:-2]
    entries = list(iter_frames(data))
    assert entries[0]["type"] == "CtlAck"
    assert entries[0]["status"] == "OK"
    assert entries[1]["offset"] == len(encode(CtlAck(Status.OK), 1))
    assert "partial frame" in entries[1]["error"]


def test_iter_frames_describes_fields():
    (entry,) = iter_frames(encode(Beacon(B0, 1, (Rgid(1, 1),), 0), 5))
    assert entry["sender"] == "10.0.0.1:9000"
    assert entry["rgids"] == ["1/1"]
    assert entry["opcode"] == "0xa0"


def test_reply_status():
    assert reply_status(WriteReply(Status.BUSY)) == Status.BUSY
    assert reply_status(TsReply(BOTTOM)) is None
    assert reply_status(None) is None


@pytest.mark.parametrize("message", SAMPLES, ids=lambda m: type(m).__name__)
def test_truncation_at_every_offset(message):
    frame = encode(message, 9)
    for cut in range(len(frame)):
        with pytest.raises(TruncatedFrame):
            decode(frame[:cut])


@pytest.mark.parametrize("message", SAMPLES, ids=lambda m: type(m).__name__)
def test_short_body_with_matching_length_prefix(message):
    frame = encode(message, 9)
    body = frame[4:]
    for cut in range(len(body)):
        with pytest.raises(ProtocolError):
            decode(struct.pack(">I", cut) + body[:cut])


@given(st.binary(max_size=512))
def test_random_bytes_never_escape_as_other_errors(data):
    try:
        decode(data)
    except ProtocolError:
        pass


@given(st.sampled_from(SAMPLES), st.data())
def test_mutated_frames_decode_or_raise_protocol_error(message, data):
    frame = bytearray(encode(message, 5))
    for _ in range(data.draw(st.integers(1, 4))):
        index = data.draw(st.integers(0, len(frame) - 1))
        frame[index] = data.draw(st.integers(0, 255))
    try:
        decode(bytes(frame))
    except ProtocolError:
        pass


@given(st.binary(max_size=256), st.lists(st.integers(1, 64), max_size=8))
def test_frame_reader_on_garbage(data, cuts):
    reader = FrameReader()
    try:
        pos = 0
        for cut in cuts + [len(data)]:
            reader.feed(data[pos:pos + cut])
            pos += cut
    except ProtocolError:
        pass
