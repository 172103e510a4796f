"""Stateless HelloRetryRequest cookies.

Wire form: ``ch1_hash (32) || timestamp (u64 seconds) || mac (32)`` with
``mac = HMAC-SHA256(secret, address || ch1_hash || timestamp)``. Any server
holding the secret can check a cookie without remembering the client.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
import time
from dataclasses import dataclass

COOKIE_LIFETIME = 60
COOKIE_SIZE = 72
# tolerate small clock differences between servers sharing a secret
CLOCK_SKEW = 5


class CookieError(ValueError):
    pass


def address_bytes(addr: tuple[str, int]) -> bytes:
    return f"{addr[0]}:{addr[1]}".encode()


@dataclass(frozen=True)
class Cookie:
    ch1_hash: bytes
    timestamp: int
    mac: bytes

    def encode(self) -> bytes:
        return self.ch1_hash + struct.pack("!Q", self.timestamp) + self.mac

    @classmethod
    def decode(cls, data: bytes) -> "Cookie":
        if len(data) != COOKIE_SIZE:
            raise CookieError(f"cookie must be {COOKIE_SIZE} bytes")
        return cls(data[:32], struct.unpack("!Q", data[32:40])[0], data[40:])


def _mac(secret: bytes, addr: tuple[str, int], ch1_hash: bytes, timestamp: int) -> bytes:
    msg = address_bytes(addr) + ch1_hash + struct.pack("!Q", timestamp)
    return hmac.new(secret, msg, hashlib.sha256).digest()


def mint(secret: bytes, addr: tuple[str, int], ch1_hash: bytes, now: float | None = None) -> Cookie:
    ts = int(time.time() if now is None else now)
    return Cookie(ch1_hash, ts, _mac(secret, addr, ch1_hash, ts))


def check(secret: bytes, addr: tuple[str, int], cookie: Cookie, now: float | None = None) -> None:
    now = time.time() if now is None else now
    if not hmac.compare_digest(_mac(secret, addr, cookie.ch1_hash, cookie.timestamp), cookie.mac):
        raise CookieError("cookie MAC mismatch (wrong address or secret)")
    if cookie.timestamp > now + CLOCK_SKEW:
        raise CookieError("cookie from the future")
    if now - cookie.timestamp > COOKIE_LIFETIME:
        raise CookieError("cookie expired")
