"""Independent reference computations used as test oracles.

Nothing here imports from ``qeaas``; each function is written straight from
the documented construction so that a shared bug cannot hide.
"""

import hashlib
import hmac

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDFExpand


def blake2s(data: bytes) -> bytes:
    return hashlib.blake2s(data, digest_size=32).digest()


def stream_bytes(seed: int, start: int, n: int) -> bytes:
    """The seeded test stream: block i = SHA-256("qeaas/stream" || seed_be64 || i_be64)."""
    out = bytearray()
    i = start // 32
    while len(out) < (start % 32) + n:
        out += hashlib.sha256(b"qeaas/stream" + seed.to_bytes(8, "big") + i.to_bytes(8, "big")).digest()
        i += 1
    return bytes(out[start % 32 : start % 32 + n])


class PoolOracle:
    """Straight-line replay of the pool schedule over the seeded stream."""

    def __init__(self, seed, capacity=512, threshold=128, backend_credit=8, inject_cap=8):
        self.seed = seed
        self.pos = 0
        self.capacity = capacity
        self.threshold = threshold
        self.backend_credit = backend_credit
        self.inject_cap = inject_cap
        self.counter = 0
        self.refills = 0
        self.key = blake2s(b"qeaas/init" + self._read(capacity))
        self.credit = min(capacity * backend_credit, capacity * 8)

    def _read(self, n):
        data = stream_bytes(self.seed, self.pos, n)
        self.pos += n
        return data

    def inject(self, data, bits):
        if not data:
            return
        self.key = blake2s(self.key + b"qeaas/inject" + data)
        self.credit = min(self.credit + min(bits, len(data) * self.inject_cap), self.capacity * 8)

    def extract(self, n):
        if n == 0:
            return b""
        t = blake2s(self.key + b"qeaas/extract" + self.counter.to_bytes(8, "little"))
        out = b""
        i = 0
        while len(out) < n:
            out += blake2s(t + i.to_bytes(4, "little"))
            i += 1
        self.key = blake2s(self.key + b"qeaas/rekey" + t)
        self.counter += 1
        self.credit -= min(self.credit, 8 * n)
        if self.credit < self.threshold * 8:
            self.refills += 1
            self.inject(self._read(self.capacity), self.capacity * self.backend_credit)
        return out[:n]


def hkdf_extract(salt: bytes, ikm: bytes) -> bytes:
    return hmac.new(salt, ikm, "sha256").digest()


def hkdf_expand(prk: bytes, info: bytes, length: int) -> bytes:
    return HKDFExpand(hashes.SHA256(), length, info).derive(prk)


# RFC 7748 X25519, written from the pseudocode in section 5
P25519 = 2**255 - 19
A24 = 121665


def _decode_scalar(k: bytes) -> int:
    b = bytearray(k)
    b[0] &= 248
    b[31] &= 127
    b[31] |= 64
    return int.from_bytes(b, "little")


def x25519(k: bytes, u: bytes) -> bytes:
    scalar = _decode_scalar(k)
    x1 = int.from_bytes(u, "little") & ((1 << 255) - 1)
    x2, z2, x3, z3, swap = 1, 0, x1, 1, 0
    for t in reversed(range(255)):
        bit = (scalar >> t) & 1
        swap ^= bit
        if swap:
            x2, x3, z2, z3 = x3, x2, z3, z2
        swap = bit
        a, b = (x2 + z2) % P25519, (x2 - z2) % P25519
        aa, bb = a * a % P25519, b * b % P25519
        e = (aa - bb) % P25519
        c, d = (x3 + z3) % P25519, (x3 - z3) % P25519
        da, cb = d * a % P25519, c * b % P25519
        x3 = (da + cb) ** 2 % P25519
        z3 = x1 * (da - cb) ** 2 % P25519
        x2 = aa * bb % P25519
        z2 = e * (aa + A24 * e) % P25519
    if swap:
        x2, x3, z2, z3 = x3, x2, z3, z2
    return (x2 * pow(z2, P25519 - 2, P25519) % P25519).to_bytes(32, "little")


def coap_header(version, mtype, tkl, code, mid) -> bytes:
    return bytes([(version << 6) | (mtype << 4) | tkl, code]) + mid.to_bytes(2, "big")
