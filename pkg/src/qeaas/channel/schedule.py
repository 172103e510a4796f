"""HKDF-SHA256 key schedule for the TLS_AES_128_GCM_SHA256-style suite."""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

HASH_LEN = 32
SALT = b"qeaas/hs"


def hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    return hmac.new(salt, ikm, hashlib.sha256).digest()


def hkdf_expand(prk: bytes, info: bytes, length: int) -> bytes:
    if length > 255 * HASH_LEN:
        raise ValueError("HKDF output too long")
    out, block = b"", b""
    counter = 1
    while len(out) < length:
        block = hmac.new(prk, block + info + bytes([counter]), hashlib.sha256).digest()
        out += block
        counter += 1
    return out[:length]


@dataclass(frozen=True)
class KeyMaterial:
    client_key: bytes
    server_key: bytes
    client_iv: bytes
    server_iv: bytes
    client_finished: bytes
    server_finished: bytes


LABELS = {
    "client_key": (b"c traffic", 16),
    "server_key": (b"s traffic", 16),
    "client_iv": (b"c iv", 12),
    "server_iv": (b"s iv", 12),
    "client_finished": (b"c finished", 32),
    "server_finished": (b"s finished", 32),
}


def key_schedule(shared_secret: bytes, transcript_hash: bytes) -> KeyMaterial:
    """Expand each label with ``info = label || transcript_hash``."""
    if len(shared_secret) != 32 or len(transcript_hash) != 32:
        raise ValueError("shared secret and transcript hash must be 32 bytes")
    prk = hkdf_extract(SALT, shared_secret)
    return KeyMaterial(**{
        name: hkdf_expand(prk, label + transcript_hash, n) for name, (label, n) in LABELS.items()
    })


def finished_mac(key: bytes, transcript_hash: bytes) -> bytes:
    return hmac.new(key, transcript_hash, hashlib.sha256).digest()
