"""ML-DSA-44 (FIPS 204) in numpy.

Only the 44 parameter set is provided. Signing is hedged by default
(fresh 32-byte ``rnd``); pass ``deterministic=True`` for the all-zero
``rnd`` variant used by known-answer tests.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

from ._bits import bitrev, pack, unpack

Q = 8380417
N = 256
D = 13
TAU = 39
LAMBDA = 128
GAMMA1 = 1 << 17
GAMMA2 = (Q - 1) // 88
K = 4
L = 4
ETA = 2
BETA = TAU * ETA
OMEGA = 80

CTILDE_SIZE = LAMBDA // 4
PK_SIZE = 32 + 32 * K * 10
SK_SIZE = 128 + 32 * ((K + L) * 3 + D * K)
SIG_SIZE = CTILDE_SIZE + L * 32 * 18 + OMEGA + K

ZETAS = np.array([pow(1753, bitrev(i, 8), Q) for i in range(256)], dtype=np.int64)
N_INV = 8347681  # 256^-1 mod q


class MLDSAError(ValueError):
    """Malformed key, signature or context."""


def _h(data: bytes, n: int) -> bytes:
    return hashlib.shake_256(data).digest(n)


# -- NTT ---------------------------------------------------------------------

def ntt(w: np.ndarray) -> np.ndarray:
    w = np.array(w, dtype=np.int64)
    lead = w.shape[:-1]
    length, blocks = 128, 1
    while length >= 1:
        v = w.reshape(*lead, blocks, 2, length)
        z = ZETAS[blocks : 2 * blocks].reshape(blocks, 1)
        t = (z * v[..., 1, :]) % Q
        top = v[..., 0, :]
        w = np.stack(((top + t) % Q, (top - t) % Q), axis=-2).reshape(*lead, N)
        length //= 2
        blocks *= 2
    return w


def intt(w: np.ndarray) -> np.ndarray:
    w = np.array(w, dtype=np.int64)
    lead = w.shape[:-1]
    length, blocks = 1, 128
    while length < N:
        v = w.reshape(*lead, blocks, 2, length)
        z = (Q - ZETAS[2 * blocks - 1 : blocks - 1 : -1]).reshape(blocks, 1)
        a, b = v[..., 0, :], v[..., 1, :]
        w = np.stack(((a + b) % Q, (z * (a - b)) % Q), axis=-2).reshape(*lead, N)
        length *= 2
        blocks //= 2
    return (w * N_INV) % Q


def _matvec(a_hat: np.ndarray, v_hat: np.ndarray) -> np.ndarray:
    return (a_hat * v_hat[None, :, :] % Q).sum(axis=1) % Q


# -- sampling ----------------------------------------------------------------

def rej_ntt_poly(seed: bytes) -> np.ndarray:
    nbytes = 840
    while True:
        buf = np.frombuffer(hashlib.shake_128(seed).digest(nbytes), dtype=np.uint8)
        c = buf.reshape(-1, 3).astype(np.int64)
        z = c[:, 0] | (c[:, 1] << 8) | ((c[:, 2] & 0x7F) << 16)
        ok = z[z < Q]
        if ok.size >= N:
            return ok[:N]
        nbytes += 168


def rej_bounded_poly(seed: bytes) -> np.ndarray:
    nbytes = 272
    while True:
        buf = np.frombuffer(hashlib.shake_256(seed).digest(nbytes), dtype=np.uint8)
        nib = np.stack((buf & 15, buf >> 4), axis=1).reshape(-1).astype(np.int64)
        nib = nib[nib < 15]
        if nib.size >= N:
            return 2 - nib[:N] % 5
        nbytes += 136


def expand_a(rho: bytes) -> np.ndarray:
    return np.array(
        [[rej_ntt_poly(rho + bytes([s, r])) for s in range(L)] for r in range(K)],
        dtype=np.int64,
    )


def expand_s(rho_prime: bytes) -> tuple[np.ndarray, np.ndarray]:
    polys = [rej_bounded_poly(rho_prime + r.to_bytes(2, "little")) for r in range(K + L)]
    return np.array(polys[:L]), np.array(polys[L:])


def expand_mask(rho2: bytes, kappa: int) -> np.ndarray:
    y = []
    for r in range(L):
        v = _h(rho2 + (kappa + r).to_bytes(2, "little"), 32 * 18)
        y.append(GAMMA1 - unpack(v, 18, N))
    return np.array(y)


def sample_in_ball(seed: bytes) -> np.ndarray:
    stream = _h(seed, 8 + 256 * 4)
    pos = 8
    signs = int.from_bytes(stream[:8], "little")
    c = [0] * N
    for i in range(N - TAU, N):
        while True:
            if pos >= len(stream):
                stream = _h(seed, len(stream) * 2)
            j = stream[pos]
            pos += 1
            if j <= i:
                break
        c[i] = c[j]
        c[j] = -1 if (signs >> (i + TAU - N)) & 1 else 1
    return np.array(c, dtype=np.int64)


# -- rounding ----------------------------------------------------------------

def _mod_pm(r: np.ndarray, alpha: int) -> np.ndarray:
    r0 = r % alpha
    return np.where(r0 > alpha // 2, r0 - alpha, r0)


def power2round(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rp = r % Q
    r0 = _mod_pm(rp, 1 << D)
    return (rp - r0) >> D, r0


def decompose(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rp = r % Q
    r0 = _mod_pm(rp, 2 * GAMMA2)
    edge = (rp - r0) == Q - 1
    r1 = np.where(edge, 0, (rp - r0) // (2 * GAMMA2))
    r0 = np.where(edge, r0 - 1, r0)
    return r1, r0


def high_bits(r: np.ndarray) -> np.ndarray:
    return decompose(r)[0]


def low_bits(r: np.ndarray) -> np.ndarray:
    return decompose(r)[1]


def make_hint(z: np.ndarray, r: np.ndarray) -> np.ndarray:
    return (high_bits(r) != high_bits(r + z)).astype(np.int64)


def use_hint(h: np.ndarray, r: np.ndarray) -> np.ndarray:
    m = (Q - 1) // (2 * GAMMA2)
    r1, r0 = decompose(r)
    up = (h == 1) & (r0 > 0)
    down = (h == 1) & (r0 <= 0)
    return np.where(up, (r1 + 1) % m, np.where(down, (r1 - 1) % m, r1))


def _inf_norm(w: np.ndarray) -> int:
    c = w % Q
    return int(np.max(np.minimum(c, Q - c)))


# -- encodings ---------------------------------------------------------------

def pk_encode(rho: bytes, t1: np.ndarray) -> bytes:
    return rho + pack(t1, 10)


def pk_decode(pk: bytes) -> tuple[bytes, np.ndarray]:
    if len(pk) != PK_SIZE:
        raise MLDSAError(f"public key must be {PK_SIZE} bytes, got {len(pk)}")
    return pk[:32], unpack(pk[32:], 10, K * N).reshape(K, N)


def sk_encode(rho, key, tr, s1, s2, t0) -> bytes:
    return (
        rho + key + tr
        + pack(ETA - s1, 3)
        + pack(ETA - s2, 3)
        + pack((1 << (D - 1)) - t0, D)
    )


def sk_decode(sk: bytes):
    if len(sk) != SK_SIZE:
        raise MLDSAError(f"secret key must be {SK_SIZE} bytes, got {len(sk)}")
    rho, key, tr = sk[:32], sk[32:64], sk[64:128]
    off = 128
    s1 = ETA - unpack(sk[off : off + 96 * L], 3, L * N).reshape(L, N)
    off += 96 * L
    s2 = ETA - unpack(sk[off : off + 96 * K], 3, K * N).reshape(K, N)
    off += 96 * K
    t0 = (1 << (D - 1)) - unpack(sk[off:], D, K * N).reshape(K, N)
    return rho, key, tr, s1, s2, t0


def _hint_pack(h: np.ndarray) -> bytes:
    out = bytearray(OMEGA + K)
    idx = 0
    for i in range(K):
        for j in np.flatnonzero(h[i]):
            out[idx] = int(j)
            idx += 1
        out[OMEGA + i] = idx
    return bytes(out)


def _hint_unpack(y: bytes) -> np.ndarray | None:
    h = np.zeros((K, N), dtype=np.int64)
    idx = 0
    for i in range(K):
        end = y[OMEGA + i]
        if end < idx or end > OMEGA:
            return None
        first = idx
        while idx < end:
            if idx > first and y[idx - 1] >= y[idx]:
                return None
            h[i, y[idx]] = 1
            idx += 1
    if any(y[idx:OMEGA]):
        return None
    return h


def sig_encode(c_tilde: bytes, z: np.ndarray, h: np.ndarray) -> bytes:
    return c_tilde + pack(GAMMA1 - _centered(z), 18) + _hint_pack(h)


def _centered(w: np.ndarray) -> np.ndarray:
    c = w % Q
    return np.where(c > Q // 2, c - Q, c)


def sig_decode(sig: bytes):
    if len(sig) != SIG_SIZE:
        raise MLDSAError(f"signature must be {SIG_SIZE} bytes, got {len(sig)}")
    c_tilde = sig[:CTILDE_SIZE]
    zbytes = sig[CTILDE_SIZE : CTILDE_SIZE + L * 32 * 18]
    z = GAMMA1 - unpack(zbytes, 18, L * N).reshape(L, N)
    return c_tilde, z, _hint_unpack(sig[CTILDE_SIZE + L * 32 * 18 :])


def w1_encode(w1: np.ndarray) -> bytes:
    return pack(w1, 6)


# -- internal algorithms -----------------------------------------------------

def keygen_internal(xi: bytes) -> tuple[bytes, bytes]:
    if len(xi) != 32:
        raise MLDSAError("seed must be 32 bytes")
    seed = _h(xi + bytes([K, L]), 128)
    rho, rho_prime, key = seed[:32], seed[32:96], seed[96:]
    a_hat = expand_a(rho)
    s1, s2 = expand_s(rho_prime)
    t = (intt(_matvec(a_hat, ntt(s1))) + s2) % Q
    t1, t0 = power2round(t)
    pk = pk_encode(rho, t1)
    tr = _h(pk, 64)
    return pk, sk_encode(rho, key, tr, s1, s2, t0)


def sign_internal(sk: bytes, message: bytes, rnd: bytes) -> bytes:
    rho, key, tr, s1, s2, t0 = sk_decode(sk)
    s1_hat, s2_hat, t0_hat = ntt(s1 % Q), ntt(s2 % Q), ntt(t0 % Q)
    a_hat = expand_a(rho)
    mu = _h(tr + message, 64)
    rho2 = _h(key + rnd + mu, 64)
    kappa = 0
    while True:
        y = expand_mask(rho2, kappa)
        kappa += L
        w = intt(_matvec(a_hat, ntt(y % Q)))
        w1 = high_bits(w)
        c_tilde = _h(mu + w1_encode(w1), CTILDE_SIZE)
        c_hat = ntt(sample_in_ball(c_tilde) % Q)
        cs1 = intt(c_hat * s1_hat % Q)
        cs2 = intt(c_hat * s2_hat % Q)
        z = (y + cs1) % Q
        r = (w - cs2) % Q
        if _inf_norm(z) >= GAMMA1 - BETA or _inf_norm(_centered(low_bits(r))) >= GAMMA2 - BETA:
            continue
        ct0 = intt(c_hat * t0_hat % Q)
        h = make_hint((-ct0) % Q, (r + ct0) % Q)
        if _inf_norm(ct0) >= GAMMA2 or int(h.sum()) > OMEGA:
            continue
        return sig_encode(c_tilde, z, h)


def verify_internal(pk: bytes, message: bytes, sig: bytes) -> bool:
    rho, t1 = pk_decode(pk)
    c_tilde, z, h = sig_decode(sig)
    if h is None:
        return False
    if _inf_norm(z) >= GAMMA1 - BETA:
        return False
    a_hat = expand_a(rho)
    tr = _h(pk, 64)
    mu = _h(tr + message, 64)
    c_hat = ntt(sample_in_ball(c_tilde) % Q)
    az = _matvec(a_hat, ntt(z % Q))
    ct1 = c_hat * ntt((t1 << D) % Q) % Q
    w_approx = intt((az - ct1) % Q)
    w1 = use_hint(h, w_approx)
    return _h(mu + w1_encode(w1), CTILDE_SIZE) == c_tilde


# -- external API ------------------------------------------------------------

def _wrap(message: bytes, ctx: bytes) -> bytes:
    if len(ctx) > 255:
        raise MLDSAError("context string longer than 255 bytes")
    return bytes([0, len(ctx)]) + ctx + message


def keygen(seed: bytes | None = None) -> tuple[bytes, bytes]:
    """Returns ``(pk, sk)``."""
    return keygen_internal(seed if seed is not None else os.urandom(32))


def sign(sk: bytes, message: bytes, ctx: bytes = b"", deterministic: bool = False) -> bytes:
    rnd = bytes(32) if deterministic else os.urandom(32)
    return sign_internal(sk, _wrap(message, ctx), rnd)


def verify(pk: bytes, message: bytes, sig: bytes, ctx: bytes = b"") -> bool:
    if len(ctx) > 255:
        return False
    try:
        return verify_internal(pk, _wrap(message, ctx), sig)
    except MLDSAError:
        return False
