"""Brick protocol: messages, framing and transports."""

from wire.codec import FrameReader, decode, decode_frame, encode
from wire.messages import (
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
)

__all__ = [
    "AnnounceRgids",
    "Beacon",
    "BeaconRequest",
    "CtlAck",
    "ErrorReply",
    "FrameReader",
    "KeysReply",
    "Message",
    "ReadTsRequest",
    "ReadValRequest",
    "RestartBrick",
    "ScanKeysRequest",
    "Status",
    "TsReply",
    "ValReply",
    "WithdrawRgids",
    "WriteReply",
    "WriteRequest",
    "decode",
    "decode_frame",
    "encode",
]
