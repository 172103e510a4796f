"""Client-side BLAKE2s entropy pool.

The pool keeps a 32-byte chaining key and an entropy credit counter. The
schedule (all hashes are unkeyed 32-byte BLAKE2s, ``||`` is concatenation):

    init     key = H("qeaas/init" || backend.read(capacity))
    inject   key = H(key || "qeaas/inject" || data)          (no-op if data empty)
    extract  T   = H(key || "qeaas/extract" || counter_le64)
             out = H(T || 0_le32) || H(T || 1_le32) || ...   truncated to n
             key = H(key || "qeaas/rekey" || T);  counter += 1
    refill   inject(backend.read(capacity), capacity * credit_per_backend_byte)

Credit is accounting only: extraction never blocks, it debits ``8 n`` bits
(clamped at zero) and refills from the backend once credit drops below
``threshold_bytes * 8``. A threshold of zero disables automatic refill.
"""

from __future__ import annotations

import hashlib
import threading
import warnings
from dataclasses import dataclass
from typing import Callable

from .sources import EntropySource, SourceError

INIT_TAG = b"qeaas/init"
INJECT_TAG = b"qeaas/inject"
EXTRACT_TAG = b"qeaas/extract"
REKEY_TAG = b"qeaas/rekey"


class PoolConfigError(ValueError):
    pass


class OverclaimedEntropy(ValueError):
    """More entropy bits were claimed than the injected data can hold."""


class RefillWarning(RuntimeWarning):
    """A refill triggered by extraction failed; output was still returned."""


def _h(*parts: bytes) -> bytes:
    h = hashlib.blake2s(digest_size=32)
    for p in parts:
        h.update(p)
    return h.digest()


@dataclass(frozen=True)
class PoolConfig:
    capacity_bytes: int = 512
    threshold_bytes: int = 128
    credit_per_backend_byte: int = 8
    credit_per_injected_byte_cap: int = 8

    def __post_init__(self):
        if self.capacity_bytes <= 0:
            raise PoolConfigError("capacity_bytes must be positive")
        if not 0 <= self.threshold_bytes <= self.capacity_bytes:
            raise PoolConfigError(
                f"threshold_bytes={self.threshold_bytes} must lie in 0..capacity_bytes={self.capacity_bytes}"
            )
        for name in ("credit_per_backend_byte", "credit_per_injected_byte_cap"):
            if not 0 <= getattr(self, name) <= 8:
                raise PoolConfigError(f"{name} must be within 0..8 bits per byte")

    @property
    def max_credit(self) -> int:
        return self.capacity_bytes * 8


class Pool:
    """BLAKE2s entropy accumulator with threshold-driven backend refill.

    All public methods take an internal lock, so one instance may be shared
    between threads. ``hooks`` receive the operation name before each
    inject/extract/refill; the benchmark harness uses them to check that
    pool work never lands inside a handshake timing window.
    """

    def __init__(self, backend: EntropySource, config: PoolConfig | None = None):
        self.config = config or PoolConfig()
        self.backend = backend
        self.extract_counter = 0
        self.last_refill_error: Exception | None = None
        self.hooks: list[Callable[[str], None]] = []
        self._lock = threading.RLock()
        seed = backend.read(self.config.capacity_bytes)
        self._key = _h(INIT_TAG, seed)
        cfg = self.config
        self._credit = min(cfg.capacity_bytes * cfg.credit_per_backend_byte, cfg.max_credit)

    @property
    def chain_key(self) -> bytes:
        # exposed for oracle tests; never part of any output
        return self._key

    def entropy_available(self) -> int:
        return self._credit

    def _notify(self, op: str) -> None:
        for hook in self.hooks:
            hook(op)

    def inject(self, data: bytes, entropy_bits: int) -> None:
        data = bytes(data)
        if entropy_bits < 0 or entropy_bits > 8 * len(data):
            raise OverclaimedEntropy(f"{entropy_bits} bits claimed for {len(data)} bytes")
        with self._lock:
            self._notify("inject")
            self._mix(data, entropy_bits)

    def _mix(self, data: bytes, entropy_bits: int) -> None:
        if not data:
            return
        self._key = _h(self._key, INJECT_TAG, data)
        gain = min(entropy_bits, len(data) * self.config.credit_per_injected_byte_cap)
        self._credit = min(self._credit + gain, self.config.max_credit)

    def refill(self) -> None:
        with self._lock:
            self._notify("refill")
            self._refill()

    def _refill(self) -> None:
        cfg = self.config
        data = self.backend.read(cfg.capacity_bytes)
        self._mix(data, cfg.capacity_bytes * cfg.credit_per_backend_byte)

    def extract(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("cannot extract a negative number of bytes")
        if n == 0:
            return b""
        with self._lock:
            self._notify("extract")
            temp = _h(self._key, EXTRACT_TAG, self.extract_counter.to_bytes(8, "little"))
            blocks = [_h(temp, i.to_bytes(4, "little")) for i in range((n + 31) // 32)]
            self._key = _h(self._key, REKEY_TAG, temp)
            self.extract_counter += 1
            self._credit -= min(self._credit, 8 * n)
            if self._credit < self.config.threshold_bytes * 8:
                try:
                    self._refill()
                    self.last_refill_error = None
                except SourceError as exc:
                    self.last_refill_error = exc
                    warnings.warn(f"pool refill failed: {exc}", RefillWarning, stacklevel=2)
            return b"".join(blocks)[:n]


def pool_new(backend: EntropySource, config: PoolConfig | None = None) -> Pool:
    return Pool(backend, config)
