"""Tag-length-value framing used by handshake bodies and certificates.

Each field is ``tag (u8) || length (u16, big endian) || value``. Decoding is
strict: the expected tags must appear exactly once, in order, with no
trailing bytes.
"""

from __future__ import annotations

import struct


class TLVError(ValueError):
    pass


def encode(fields: list[tuple[int, bytes]]) -> bytes:
    out = bytearray()
    for tag, value in fields:
        if len(value) > 0xFFFF:
            raise TLVError(f"field {tag} too long")
        out += struct.pack("!BH", tag, len(value)) + value
    return bytes(out)


def decode(data: bytes, tags: list[int]) -> list[bytes]:
    values = []
    pos = 0
    for want in tags:
        if pos + 3 > len(data):
            raise TLVError(f"truncated before field {want}")
        tag, length = struct.unpack_from("!BH", data, pos)
        if tag != want:
            raise TLVError(f"expected field {want}, found {tag}")
        pos += 3
        if pos + length > len(data):
            raise TLVError(f"field {tag} overruns buffer")
        values.append(bytes(data[pos : pos + length]))
        pos += length
    if pos != len(data):
        raise TLVError(f"{len(data) - pos} trailing bytes")
    return values
