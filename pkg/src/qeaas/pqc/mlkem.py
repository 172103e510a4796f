"""ML-KEM (FIPS 203) in numpy.

ML-KEM-512 is what the channel uses. ML-KEM-768 is kept so the generic code
can be cross-checked against OpenSSL, which does not ship the 512 set.

Polynomials are int64 arrays of shape ``(..., 256)`` holding values in
``[0, q)``. Nothing here is constant time.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from ._bits import bitrev, pack, unpack

Q = 3329
N = 256

ZETAS = np.array([pow(17, bitrev(i, 7), Q) for i in range(128)], dtype=np.int64)
GAMMAS = np.array([pow(17, 2 * bitrev(i, 7) + 1, Q) for i in range(128)], dtype=np.int64)
N_INV = 3303  # 128^-1 mod q


class MLKEMError(ValueError):
    """Malformed key or ciphertext input."""


@dataclass(frozen=True)
class Params:
    name: str
    k: int
    eta1: int
    eta2: int
    du: int
    dv: int

    @property
    def ek_size(self) -> int:
        return 384 * self.k + 32

    @property
    def dk_size(self) -> int:
        return 768 * self.k + 96

    @property
    def ct_size(self) -> int:
        return 32 * (self.du * self.k + self.dv)


ML_KEM_512 = Params("ML-KEM-512", k=2, eta1=3, eta2=2, du=10, dv=4)
ML_KEM_768 = Params("ML-KEM-768", k=3, eta1=2, eta2=2, du=10, dv=4)


# -- NTT ---------------------------------------------------------------------

def ntt(f: np.ndarray) -> np.ndarray:
    f = np.array(f, dtype=np.int64)
    lead = f.shape[:-1]
    length, blocks = 128, 1
    while length >= 2:
        v = f.reshape(*lead, blocks, 2, length)
        z = ZETAS[blocks : 2 * blocks].reshape(blocks, 1)
        t = (z * v[..., 1, :]) % Q
        top = v[..., 0, :]
        v = np.stack(((top + t) % Q, (top - t) % Q), axis=-2)
        f = v.reshape(*lead, N)
        length //= 2
        blocks *= 2
    return f


def intt(f: np.ndarray) -> np.ndarray:
    f = np.array(f, dtype=np.int64)
    lead = f.shape[:-1]
    length, blocks = 2, 64
    while length <= 128:
        v = f.reshape(*lead, blocks, 2, length)
        z = ZETAS[2 * blocks - 1 : blocks - 1 : -1].reshape(blocks, 1)
        a, b = v[..., 0, :], v[..., 1, :]
        v = np.stack(((a + b) % Q, (z * (b - a)) % Q), axis=-2)
        f = v.reshape(*lead, N)
        length *= 2
        blocks //= 2
    return (f * N_INV) % Q


def ntt_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise product in the NTT domain (pairs of degree-one residues)."""
    a = a.reshape(*a.shape[:-1], 128, 2)
    b = b.reshape(*b.shape[:-1], 128, 2)
    a0, a1 = a[..., 0], a[..., 1]
    b0, b1 = b[..., 0], b[..., 1]
    c0 = (a0 * b0 + (a1 * b1 % Q) * GAMMAS) % Q
    c1 = (a0 * b1 + a1 * b0) % Q
    return np.stack((c0, c1), axis=-1).reshape(*c0.shape[:-1], N)


def _matvec(a_hat: np.ndarray, v_hat: np.ndarray) -> np.ndarray:
    # a_hat: (k, k, 256), v_hat: (k, 256) -> (k, 256)
    return ntt_mul(a_hat, v_hat[None, :, :]).sum(axis=1) % Q


# -- hashing and sampling ----------------------------------------------------

def _G(data: bytes) -> tuple[bytes, bytes]:
    d = hashlib.sha3_512(data).digest()
    return d[:32], d[32:]


def _H(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def _J(data: bytes) -> bytes:
    return hashlib.shake_256(data).digest(32)


def _prf(eta: int, seed: bytes, nonce: int) -> bytes:
    return hashlib.shake_256(seed + bytes([nonce])).digest(64 * eta)


def sample_ntt(seed: bytes) -> np.ndarray:
    """Rejection-sample a polynomial in NTT form from SHAKE128(seed)."""
    nbytes = 504
    while True:
        buf = np.frombuffer(hashlib.shake_128(seed).digest(nbytes), dtype=np.uint8)
        c = buf.reshape(-1, 3).astype(np.int64)
        d1 = c[:, 0] + 256 * (c[:, 1] & 15)
        d2 = (c[:, 1] >> 4) + 16 * c[:, 2]
        cand = np.stack((d1, d2), axis=1).reshape(-1)
        ok = cand[cand < Q]
        if ok.size >= N:
            return ok[:N]
        nbytes += 168


def sample_cbd(data: bytes, eta: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    bits = bits.astype(np.int64).reshape(N, 2, eta)
    return (bits[:, 0, :].sum(axis=1) - bits[:, 1, :].sum(axis=1)) % Q


def _expand_a(rho: bytes, k: int) -> np.ndarray:
    return np.array(
        [[sample_ntt(rho + bytes([j, i])) for j in range(k)] for i in range(k)],
        dtype=np.int64,
    )


# -- compression / encoding --------------------------------------------------

def compress(x: np.ndarray, d: int) -> np.ndarray:
    return (((x << d) + Q // 2) // Q) & ((1 << d) - 1)


def decompress(y: np.ndarray, d: int) -> np.ndarray:
    return (y * Q + (1 << (d - 1))) >> d


def byte_encode(f: np.ndarray, d: int) -> bytes:
    return pack(f, d)


def byte_decode(data: bytes, d: int, count: int = N) -> np.ndarray:
    f = unpack(data, d, count)
    return f % Q if d == 12 else f


# -- K-PKE -------------------------------------------------------------------

def _pke_keygen(p: Params, d: bytes) -> tuple[bytes, bytes]:
    rho, sigma = _G(d + bytes([p.k]))
    a_hat = _expand_a(rho, p.k)
    s = np.array([sample_cbd(_prf(p.eta1, sigma, i), p.eta1) for i in range(p.k)])
    e = np.array([sample_cbd(_prf(p.eta1, sigma, p.k + i), p.eta1) for i in range(p.k)])
    s_hat = ntt(s)
    t_hat = (_matvec(a_hat, s_hat) + ntt(e)) % Q
    return byte_encode(t_hat, 12) + rho, byte_encode(s_hat, 12)


def _pke_encrypt(p: Params, ek: bytes, m: bytes, r: bytes) -> bytes:
    k = p.k
    t_hat = byte_decode(ek[: 384 * k], 12, k * N).reshape(k, N)
    rho = ek[384 * k :]
    a_hat = _expand_a(rho, k)
    y = np.array([sample_cbd(_prf(p.eta1, r, i), p.eta1) for i in range(k)])
    e1 = np.array([sample_cbd(_prf(p.eta2, r, k + i), p.eta2) for i in range(k)])
    e2 = sample_cbd(_prf(p.eta2, r, 2 * k), p.eta2)
    y_hat = ntt(y)
    u = (intt(_matvec(a_hat.transpose(1, 0, 2), y_hat)) + e1) % Q
    mu = decompress(byte_decode(m, 1), 1)
    v = (intt(ntt_mul(t_hat, y_hat).sum(axis=0) % Q) + e2 + mu) % Q
    return byte_encode(compress(u, p.du), p.du) + byte_encode(compress(v, p.dv), p.dv)


def _pke_decrypt(p: Params, dk_pke: bytes, c: bytes) -> bytes:
    k = p.k
    split = 32 * p.du * k
    u = decompress(byte_decode(c[:split], p.du, k * N), p.du).reshape(k, N)
    v = decompress(byte_decode(c[split:], p.dv), p.dv)
    s_hat = byte_decode(dk_pke, 12, k * N).reshape(k, N)
    w = (v - intt(ntt_mul(s_hat, ntt(u)).sum(axis=0) % Q)) % Q
    return byte_encode(compress(w, 1), 1)


# -- ML-KEM ------------------------------------------------------------------

def check_ek(p: Params, ek: bytes) -> None:
    if len(ek) != p.ek_size:
        raise MLKEMError(f"encapsulation key must be {p.ek_size} bytes, got {len(ek)}")
    body = ek[: 384 * p.k]
    if byte_encode(byte_decode(body, 12, p.k * N), 12) != body:
        raise MLKEMError("encapsulation key fails the modulus check")


def check_dk(p: Params, dk: bytes) -> None:
    if len(dk) != p.dk_size:
        raise MLKEMError(f"decapsulation key must be {p.dk_size} bytes, got {len(dk)}")
    k = p.k
    if _H(dk[384 * k : 768 * k + 32]) != dk[768 * k + 32 : 768 * k + 64]:
        raise MLKEMError("decapsulation key fails the hash check")


def keygen_internal(d: bytes, z: bytes, p: Params = ML_KEM_512) -> tuple[bytes, bytes]:
    if len(d) != 32 or len(z) != 32:
        raise MLKEMError("seeds d and z must be 32 bytes each")
    ek, dk_pke = _pke_keygen(p, d)
    return ek, dk_pke + ek + _H(ek) + z


def encaps_internal(ek: bytes, m: bytes, p: Params = ML_KEM_512) -> tuple[bytes, bytes]:
    """Returns ``(shared_key, ciphertext)``."""
    if len(m) != 32:
        raise MLKEMError("message seed must be 32 bytes")
    shared, r = _G(m + _H(ek))
    return shared, _pke_encrypt(p, ek, m, r)


def decaps_internal(dk: bytes, c: bytes, p: Params = ML_KEM_512) -> bytes:
    k = p.k
    dk_pke = dk[: 384 * k]
    ek = dk[384 * k : 768 * k + 32]
    h = dk[768 * k + 32 : 768 * k + 64]
    z = dk[768 * k + 64 :]
    m2 = _pke_decrypt(p, dk_pke, c)
    shared, r2 = _G(m2 + h)
    reject = _J(z + c)
    if _pke_encrypt(p, ek, m2, r2) != c:
        return reject
    return shared


def keygen(p: Params = ML_KEM_512) -> tuple[bytes, bytes]:
    """Returns ``(ek, dk)``."""
    return keygen_internal(os.urandom(32), os.urandom(32), p)


def encaps(ek: bytes, p: Params = ML_KEM_512) -> tuple[bytes, bytes]:
    check_ek(p, ek)
    return encaps_internal(ek, os.urandom(32), p)


def decaps(dk: bytes, c: bytes, p: Params = ML_KEM_512) -> bytes:
    check_dk(p, dk)
    if len(c) != p.ct_size:
        raise MLKEMError(f"ciphertext must be {p.ct_size} bytes, got {len(c)}")
    return decaps_internal(dk, c, p)
