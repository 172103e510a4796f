"""Handshake messages, fragmentation and reassembly.

A handshake message is ``msg_type (u8) || length (u24) || body`` and this
full encoding is what enters the transcript. On the wire each message is
split into fragments carried one per handshake record::

    msg_type (u8) || total_length (u24) || frag_offset (u24) || frag_length (u24) || data
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from . import tlv
from .record import HANDSHAKE, HEADER_SIZE, Record

FRAG_HEADER = 10
MAX_MESSAGE = 1 << 16


class MsgType(IntEnum):
    CH1 = 1
    HRR = 2
    CH2 = 3
    SH = 4
    CERT = 5
    CERT_VERIFY = 6
    FINISHED_S = 7
    FINISHED_C = 8


class ReassemblyError(ValueError):
    pass


# TLV field tags inside message bodies
VERSION, RANDOM, KEX, SIG, COOKIE, KEY_SHARE, CERTIFICATE, SIGNATURE, VERIFY_DATA = range(1, 10)
PROTOCOL_VERSION = b"\xfe\xfc"

BODY_FIELDS = {
    MsgType.CH1: [VERSION, RANDOM, KEX, SIG],
    MsgType.HRR: [VERSION, COOKIE, KEX, SIG],
    MsgType.CH2: [VERSION, RANDOM, KEX, SIG, COOKIE, KEY_SHARE],
    MsgType.SH: [VERSION, RANDOM, KEY_SHARE],
    MsgType.CERT: [CERTIFICATE],
    MsgType.CERT_VERIFY: [SIG, SIGNATURE],
    MsgType.FINISHED_S: [VERIFY_DATA],
    MsgType.FINISHED_C: [VERIFY_DATA],
}


@dataclass(frozen=True)
class HandshakeMessage:
    msg_type: MsgType
    body: bytes

    def encode(self) -> bytes:
        return bytes([self.msg_type]) + len(self.body).to_bytes(3, "big") + self.body

    @classmethod
    def build(cls, msg_type: MsgType, fields: dict[int, bytes]) -> "HandshakeMessage":
        tags = BODY_FIELDS[msg_type]
        return cls(msg_type, tlv.encode([(t, fields[t]) for t in tags]))

    def fields(self) -> dict[int, bytes]:
        values = tlv.decode(self.body, BODY_FIELDS[self.msg_type])
        return dict(zip(BODY_FIELDS[self.msg_type], values))


@dataclass(frozen=True)
class Fragment:
    msg_type: int
    total_length: int
    offset: int
    data: bytes

    def encode(self) -> bytes:
        return (
            bytes([self.msg_type])
            + self.total_length.to_bytes(3, "big")
            + self.offset.to_bytes(3, "big")
            + len(self.data).to_bytes(3, "big")
            + self.data
        )

    @classmethod
    def decode(cls, body: bytes) -> "Fragment":
        if len(body) < FRAG_HEADER:
            raise ReassemblyError("truncated fragment header")
        msg_type = body[0]
        if msg_type not in MsgType._value2member_map_:
            raise ReassemblyError(f"unknown handshake message type {msg_type}")
        total, offset, length = (int.from_bytes(body[i : i + 3], "big") for i in (1, 4, 7))
        if length != len(body) - FRAG_HEADER:
            raise ReassemblyError("fragment length does not match record length")
        if offset + length > total:
            raise ReassemblyError("fragment extends past total_length")
        if total > MAX_MESSAGE:
            raise ReassemblyError(f"message of {total} bytes exceeds reassembly limit")
        return cls(msg_type, total, offset, body[FRAG_HEADER:])


def fragment(msg: HandshakeMessage, mtu: int) -> list[bytes]:
    """Split ``msg`` into handshake records no larger than ``mtu`` bytes each."""
    if mtu < 512:
        raise ValueError("mtu must be at least 512")
    room = mtu - HEADER_SIZE - FRAG_HEADER
    body = msg.body
    out = []
    offset = 0
    while True:
        chunk = body[offset : offset + room]
        frag = Fragment(msg.msg_type, len(body), offset, chunk)
        out.append(Record(HANDSHAKE, 0, 0, frag.encode()).encode())
        offset += len(chunk)
        if offset >= len(body):
            return out


class Reassembler:
    """Order-insensitive, duplicate-tolerant reassembly of one message."""

    def __init__(self, msg_type: int, total_length: int):
        self.msg_type = msg_type
        self.total_length = total_length
        self.buffer = bytearray(total_length)
        self.have = bytearray(total_length)

    def add(self, frag: Fragment) -> None:
        if frag.msg_type != self.msg_type:
            raise ReassemblyError("fragment belongs to another message")
        if frag.total_length != self.total_length:
            raise ReassemblyError("inconsistent total_length across fragments")
        lo, hi = frag.offset, frag.offset + len(frag.data)
        for i, b in enumerate(frag.data, lo):
            if self.have[i] and self.buffer[i] != b:
                raise ReassemblyError("overlapping fragments disagree")
        self.buffer[lo:hi] = frag.data
        self.have[lo:hi] = b"\x01" * (hi - lo)

    @property
    def complete(self) -> bool:
        return all(self.have)

    def message(self) -> HandshakeMessage:
        if not self.complete:
            raise ReassemblyError("message incomplete")
        return HandshakeMessage(MsgType(self.msg_type), bytes(self.buffer))


def reassemble(fragments: list[bytes | Fragment]) -> HandshakeMessage:
    """Reassemble one message from records or fragments, in any order."""
    frags = []
    for f in fragments:
        if isinstance(f, Fragment):
            frags.append(f)
        else:
            frags.append(Fragment.decode(bytes(f)[HEADER_SIZE:]))
    if not frags:
        raise ReassemblyError("no fragments")
    r = Reassembler(frags[0].msg_type, frags[0].total_length)
    for f in frags:
        r.add(f)
    return r.message()


def pack_datagrams(records: list[bytes], mtu: int) -> list[bytes]:
    """Greedily pack whole records into datagrams of at most ``mtu`` bytes."""
    out: list[bytes] = []
    cur = b""
    for rec in records:
        if len(rec) > mtu:
            raise ValueError("record larger than mtu")
        if cur and len(cur) + len(rec) > mtu:
            out.append(cur)
            cur = b""
        cur += rec
    if cur:
        out.append(cur)
    return out


def frag_count(body_len: int, mtu: int) -> int:
    room = mtu - HEADER_SIZE - FRAG_HEADER
    return max(1, -(-body_len // room))

