"""RFC 7252 CoAP message codec, limited to what the entropy pipeline needs."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from enum import IntEnum


class MsgType(IntEnum):
    CON = 0
    NON = 1
    ACK = 2
    RST = 3


def code(cls: int, detail: int) -> int:
    return (cls << 5) | detail


def code_str(c: int) -> str:
    return f"{c >> 5}.{c & 31:02d}"


EMPTY = code(0, 0)
GET = code(0, 1)
POST = code(0, 2)
CONTENT = code(2, 5)
BAD_REQUEST = code(4, 0)
NOT_FOUND = code(4, 4)
METHOD_NOT_ALLOWED = code(4, 5)
INTERNAL_SERVER_ERROR = code(5, 0)
BAD_GATEWAY = code(5, 2)
GATEWAY_TIMEOUT = code(5, 4)
PROXYING_NOT_SUPPORTED = code(5, 5)

URI_PATH = 11
CONTENT_FORMAT = 12
PROXY_URI = 35

FORMAT_JSON = 50
PAYLOAD_MARKER = 0xFF
MAX_PROXY_URI = 1023


class MalformedMessage(ValueError):
    """Base class for every decode failure."""


class TruncatedHeader(MalformedMessage):
    pass


class BadVersion(MalformedMessage):
    pass


class BadTokenLength(MalformedMessage):
    pass


class TruncatedToken(MalformedMessage):
    pass


class TruncatedOption(MalformedMessage):
    pass


class ReservedNibble(MalformedMessage):
    pass


class OptionNumberOverflow(MalformedMessage):
    pass


class EmptyPayload(MalformedMessage):
    """Payload marker present but followed by nothing."""


class NonEmptyEmptyMessage(MalformedMessage):
    """Code 0.00 carrying token, options or payload."""


class EncodeError(ValueError):
    pass


@dataclass
class CoapMessage:
    msg_type: MsgType
    code: int
    message_id: int
    token: bytes = b""
    options: list[tuple[int, bytes]] = field(default_factory=list)
    payload: bytes = b""

    def option(self, number: int) -> bytes | None:
        for num, value in self.options:
            if num == number:
                return value
        return None

    @property
    def proxy_uri(self) -> str | None:
        raw = self.option(PROXY_URI)
        return None if raw is None else raw.decode("utf-8", "replace")

    def wire_options(self) -> list[tuple[int, bytes]]:
        # stable sort keeps repeated options in insertion order
        return sorted(self.options, key=lambda o: o[0])


def _ext(value: int) -> tuple[int, bytes]:
    if value < 13:
        return value, b""
    if value < 269:
        return 13, bytes([value - 13])
    if value < 65805:
        return 14, struct.pack("!H", value - 269)
    raise EncodeError(f"option delta/length {value} too large")


def encode(msg: CoapMessage) -> bytes:
    if len(msg.token) > 8:
        raise EncodeError("token longer than 8 bytes")
    if not 0 <= msg.message_id <= 0xFFFF:
        raise EncodeError("message id out of range")
    if not 0 <= msg.code <= 0xFF:
        raise EncodeError("code out of range")
    if msg.code == EMPTY and (msg.token or msg.options or msg.payload):
        raise EncodeError("empty message must not carry token, options or payload")
    out = bytearray(
        struct.pack("!BBH", (1 << 6) | (int(msg.msg_type) << 4) | len(msg.token), msg.code, msg.message_id)
    )
    out += msg.token
    last = 0
    for number, value in msg.wire_options():
        if not 0 <= number <= 0xFFFF:
            raise EncodeError(f"option number {number} out of range")
        dn, dext = _ext(number - last)
        ln, lext = _ext(len(value))
        out.append((dn << 4) | ln)
        out += dext + lext + value
        last = number
    if msg.payload:
        out.append(PAYLOAD_MARKER)
        out += msg.payload
    return bytes(out)


def _read_ext(nibble: int, data: bytes, pos: int) -> tuple[int, int]:
    if nibble < 13:
        return nibble, pos
    if nibble == 13:
        if pos + 1 > len(data):
            raise TruncatedOption("missing 8-bit extension")
        return data[pos] + 13, pos + 1
    if nibble == 14:
        if pos + 2 > len(data):
            raise TruncatedOption("missing 16-bit extension")
        return struct.unpack_from("!H", data, pos)[0] + 269, pos + 2
    raise ReservedNibble("nibble 15 outside the payload marker")


def decode(data: bytes) -> CoapMessage:
    data = bytes(data)
    if len(data) < 4:
        raise TruncatedHeader(f"{len(data)} bytes, need at least 4")
    first, c, mid = struct.unpack_from("!BBH", data)
    if first >> 6 != 1:
        raise BadVersion(f"version {first >> 6}")
    tkl = first & 0x0F
    if tkl > 8:
        raise BadTokenLength(f"TKL={tkl}")
    if len(data) < 4 + tkl:
        raise TruncatedToken("token runs past end of message")
    if c == EMPTY and len(data) > 4:
        raise NonEmptyEmptyMessage("bytes after message id in an empty message")
    token = data[4 : 4 + tkl]
    pos = 4 + tkl
    number = 0
    options = []
    payload = b""
    while pos < len(data):
        byte = data[pos]
        pos += 1
        if byte == PAYLOAD_MARKER:
            payload = data[pos:]
            if not payload:
                raise EmptyPayload("payload marker with zero-length payload")
            break
        delta, pos = _read_ext(byte >> 4, data, pos)
        length, pos = _read_ext(byte & 0x0F, data, pos)
        number += delta
        if number > 0xFFFF:
            raise OptionNumberOverflow(f"option number {number}")
        if pos + length > len(data):
            raise TruncatedOption(f"option {number} value runs past end of message")
        options.append((number, data[pos : pos + length]))
        pos += length
    return CoapMessage(MsgType((first >> 4) & 3), c, mid, token, options, payload)


def match_response(request: CoapMessage, candidate: CoapMessage) -> bool:
    """Token-based response matching; piggybacked ACKs must also echo the MID."""
    if candidate.token != request.token:
        return False
    if candidate.msg_type == MsgType.ACK:
        return candidate.message_id == request.message_id
    if candidate.msg_type == MsgType.RST:
        return False
    return candidate.code >> 5 != 0


def new_token(n: int = 4) -> bytes:
    return os.urandom(n)


def get_request(proxy_uri: str, message_id: int, token: bytes, confirmable: bool = True) -> CoapMessage:
    raw = proxy_uri.encode()
    if len(raw) > MAX_PROXY_URI:
        raise EncodeError("Proxy-Uri too long")
    return CoapMessage(
        MsgType.CON if confirmable else MsgType.NON,
        GET,
        message_id,
        token,
        [(PROXY_URI, raw)],
    )
