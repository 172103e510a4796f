"""Entropy sources shared by the client pool and the HTTP backend.

Three kinds exist:

* ``os-random``: ``os.urandom``; stands in for the Linux system pool.
* ``simulated-qrng``: sequential reads from a byte-stream file, standing in
  for a QRNG device. Finite; raises :class:`StreamExhausted` at the end.
* ``deterministic-test``: a seeded, reproducible stream (see
  :func:`seeded_stream`). Records every read for inspection.
"""

from __future__ import annotations

import hashlib
import os
import threading
from pathlib import Path

STREAM_TAG = b"qeaas/stream"


class SourceError(RuntimeError):
    """The backend could not deliver the requested bytes."""


class StreamExhausted(SourceError):
    pass


def seeded_stream(seed: int, nbytes: int, offset: int = 0) -> bytes:
    """Bytes ``[offset, offset + nbytes)`` of the deterministic test stream.

    Block ``i`` of the stream is ``SHA-256(b"qeaas/stream" || seed_be64 || i_be64)``.
    """
    if not 0 <= seed < 1 << 64:
        raise ValueError("seed must fit in 64 bits")
    first, last = offset // 32, (offset + nbytes + 31) // 32
    prefix = STREAM_TAG + seed.to_bytes(8, "big")
    blob = b"".join(
        hashlib.sha256(prefix + i.to_bytes(8, "big")).digest() for i in range(first, last)
    )
    start = offset - first * 32
    return blob[start : start + nbytes]


class EntropySource:
    kind = "abstract"

    def __init__(self):
        self._lock = threading.Lock()
        self.reads: list[int] = []

    def read(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("negative read")
        with self._lock:
            data = self._read(n)
            self.reads.append(n)
            return data

    def _read(self, n: int) -> bytes:
        raise NotImplementedError


class OSRandomSource(EntropySource):
    kind = "os-random"

    def _read(self, n: int) -> bytes:
        return os.urandom(n)


class DeterministicSource(EntropySource):
    kind = "deterministic-test"

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = seed
        self.position = 0

    def _read(self, n: int) -> bytes:
        data = seeded_stream(self.seed, n, self.position)
        self.position += n
        return data


class StreamFileSource(EntropySource):
    """Sequential reader over a QRNG dump file."""

    kind = "simulated-qrng"

    def __init__(self, path: str | os.PathLike):
        super().__init__()
        self.path = Path(path)
        self._fh = open(self.path, "rb")

    def _read(self, n: int) -> bytes:
        data = self._fh.read(n)
        if len(data) < n:
            # leave the cursor where it was so a smaller read could still succeed
            self._fh.seek(-len(data), os.SEEK_CUR)
            raise StreamExhausted(f"{self.path}: wanted {n} bytes, {len(data)} left")
        return data

    def close(self) -> None:
        self._fh.close()


class FailingSource(EntropySource):
    """Raises on every read after ``ok_reads`` successful ones. Test helper."""

    kind = "failing"

    def __init__(self, inner: EntropySource, ok_reads: int = 0):
        super().__init__()
        self.inner = inner
        self.ok_reads = ok_reads

    def _read(self, n: int) -> bytes:
        if self.ok_reads <= 0:
            raise SourceError("backend unavailable")
        self.ok_reads -= 1
        return self.inner.read(n)


def make_source(kind: str, seed: int = 0, stream_file: str | None = None) -> EntropySource:
    if kind in ("os-random", "mixed"):
        return OSRandomSource()
    if kind in ("deterministic-test", "test"):
        return DeterministicSource(seed)
    if kind in ("simulated-qrng", "direct"):
        if stream_file is None:
            raise ValueError(f"source kind {kind!r} needs a stream file")
        return StreamFileSource(stream_file)
    raise ValueError(f"unknown entropy source kind {kind!r}")
