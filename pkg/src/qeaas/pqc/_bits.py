"""Little-endian bit packing of coefficient arrays, shared by ML-KEM and ML-DSA."""

import numpy as np


def pack(coeffs: np.ndarray, bits: int) -> bytes:
    """Pack non-negative integers (< 2**bits) into bytes, LSB first."""
    c = np.asarray(coeffs, dtype=np.int64).reshape(-1)
    shifts = np.arange(bits, dtype=np.int64)
    bitmat = ((c[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def unpack(data: bytes, bits: int, count: int) -> np.ndarray:
    """Inverse of :func:`pack`; returns ``count`` integers."""
    if len(data) * 8 < bits * count:
        raise ValueError("not enough bytes to unpack")
    raw = np.frombuffer(data, dtype=np.uint8)
    bitarr = np.unpackbits(raw, bitorder="little")[: bits * count].astype(np.int64)
    weights = np.int64(1) << np.arange(bits, dtype=np.int64)
    return bitarr.reshape(count, bits) @ weights


def bitrev(x: int, width: int) -> int:
    return int(format(x, f"0{width}b")[::-1], 2)
