"""Transcript signatures: ML-DSA-44 or ECDSA P-256 over SHA-256.

Keys travel as algorithm-tagged bytes: one byte carrying the :class:`Sig`
value followed by the raw key (ML-DSA encodings, or a 32-byte scalar /
65-byte uncompressed point for P-256).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from ..pqc import mldsa
from .config import Sig


class SignatureError(ValueError):
    pass


@dataclass(frozen=True)
class PublicKey:
    alg: Sig
    raw: bytes

    def encode(self) -> bytes:
        return bytes([self.alg.value]) + self.raw

    @classmethod
    def decode(cls, data: bytes) -> "PublicKey":
        alg = _alg(data)
        raw = bytes(data[1:])
        want = mldsa.PK_SIZE if alg is Sig.MLDSA44 else 65
        if len(raw) != want:
            raise SignatureError(f"{alg.name} public key must be {want} bytes")
        return cls(alg, raw)


@dataclass(frozen=True)
class SigningKey:
    alg: Sig
    raw: bytes
    public: PublicKey
    _ec: object = field(default=None, repr=False, compare=False)

    def encode(self) -> bytes:
        return bytes([self.alg.value]) + self.raw

    @classmethod
    def decode(cls, data: bytes) -> "SigningKey":
        alg = _alg(data)
        raw = bytes(data[1:])
        if alg is Sig.MLDSA44:
            if len(raw) != mldsa.SK_SIZE + mldsa.PK_SIZE:
                raise SignatureError("ML-DSA-44 key file must hold sk || pk")
            pk = raw[mldsa.SK_SIZE :]
            return cls(alg, raw, PublicKey(alg, pk))
        if len(raw) != 32:
            raise SignatureError("P-256 private scalar must be 32 bytes")
        priv = ec.derive_private_key(int.from_bytes(raw, "big"), ec.SECP256R1())
        pub = priv.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)
        return cls(alg, raw, PublicKey(alg, pub), priv)


def _alg(data: bytes) -> Sig:
    if not data:
        raise SignatureError("empty key encoding")
    try:
        return Sig(data[0])
    except ValueError:
        raise SignatureError(f"unknown signature algorithm tag {data[0]}") from None


def generate(alg: Sig) -> SigningKey:
    if alg is Sig.MLDSA44:
        pk, sk = mldsa.keygen()
        return SigningKey(alg, sk + pk, PublicKey(alg, pk))
    priv = ec.generate_private_key(ec.SECP256R1())
    raw = priv.private_numbers().private_value.to_bytes(32, "big")
    pub = priv.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)
    return SigningKey(alg, raw, PublicKey(alg, pub), priv)


def sign(key: SigningKey, message: bytes) -> bytes:
    if key.alg is Sig.MLDSA44:
        return mldsa.sign(key.raw[: mldsa.SK_SIZE], message)
    return key._ec.sign(message, ec.ECDSA(hashes.SHA256()))


def verify(public: PublicKey, message: bytes, signature: bytes) -> bool:
    if public.alg is Sig.MLDSA44:
        return mldsa.verify(public.raw, message, signature)
    try:
        point = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), public.raw)
        point.verify(signature, message, ec.ECDSA(hashes.SHA256()))
    except (InvalidSignature, ValueError):
        return False
    return True


def sign_transcript(key: SigningKey, transcript_hash: bytes) -> bytes:
    return sign(key, transcript_hash)


def verify_transcript(public: PublicKey, transcript_hash: bytes, signature: bytes) -> bool:
    return verify(public, transcript_hash, signature)
