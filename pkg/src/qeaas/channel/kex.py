"""Key exchange: ML-KEM-512 encapsulation or ephemeral X25519 / P-256 DH.

The client always speaks first (its share rides in the second ClientHello),
the server answers in ServerHello. For ML-KEM the client share is an
encapsulation key and the server answer a ciphertext.
"""

from __future__ import annotations

from cryptography.hazmat.primitives.asymmetric import ec, x25519
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from ..pqc import mlkem
from .config import Kex


class KeyExchangeError(ValueError):
    pass


SHARE_SIZES = {
    Kex.MLKEM512: (mlkem.ML_KEM_512.ek_size, mlkem.ML_KEM_512.ct_size),
    Kex.X25519: (32, 32),
    Kex.P256: (65, 65),
}


def client_share(kex: Kex) -> tuple[bytes, object]:
    """Returns ``(public share, private state)``."""
    if kex is Kex.MLKEM512:
        ek, dk = mlkem.keygen()
        return ek, dk
    if kex is Kex.X25519:
        priv = x25519.X25519PrivateKey.generate()
        return priv.public_key().public_bytes_raw(), priv
    priv = ec.generate_private_key(ec.SECP256R1())
    return _p256_bytes(priv.public_key()), priv


def server_exchange(kex: Kex, client_public: bytes) -> tuple[bytes, bytes]:
    """Returns ``(server share, 32-byte shared secret)``."""
    _check_len(kex, client_public, 0)
    if kex is Kex.MLKEM512:
        try:
            shared, ct = mlkem.encaps(client_public)
        except mlkem.MLKEMError as exc:
            raise KeyExchangeError(str(exc)) from exc
        return ct, shared
    state_public, priv = client_share(kex)
    return state_public, _dh(kex, priv, client_public)


def client_finish(kex: Kex, state: object, server_public: bytes) -> bytes:
    _check_len(kex, server_public, 1)
    if kex is Kex.MLKEM512:
        try:
            return mlkem.decaps(state, server_public)
        except mlkem.MLKEMError as exc:
            raise KeyExchangeError(str(exc)) from exc
    return _dh(kex, state, server_public)


def kem_exchange(kex: Kex, role: str, peer_input: bytes, state: object = None) -> tuple[bytes, bytes]:
    """Single-call view of the exchange.

    ``role="server"`` answers a client share. ``role="client"`` completes a
    client exchange begun with :func:`client_share` and returns an empty
    public output alongside the secret.
    """
    if role == "server":
        return server_exchange(kex, peer_input)
    if role == "client":
        if state is None:
            raise KeyExchangeError("client role needs the state from client_share()")
        return b"", client_finish(kex, state, peer_input)
    raise ValueError(f"role must be client or server, not {role!r}")


def _check_len(kex: Kex, data: bytes, which: int) -> None:
    want = SHARE_SIZES[kex][which]
    if len(data) != want:
        raise KeyExchangeError(f"{kex.name} share must be {want} bytes, got {len(data)}")


def _p256_bytes(pub: ec.EllipticCurvePublicKey) -> bytes:
    return pub.public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)


def _dh(kex: Kex, priv, peer: bytes) -> bytes:
    try:
        if kex is Kex.X25519:
            secret = priv.exchange(x25519.X25519PublicKey.from_public_bytes(peer))
        else:
            point = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), peer)
            secret = priv.exchange(ec.ECDH(), point)
    except ValueError as exc:
        raise KeyExchangeError(f"{kex.name}: {exc}") from exc
    if secret == bytes(len(secret)):
        raise KeyExchangeError(f"{kex.name}: all-zero shared secret")
    return secret
