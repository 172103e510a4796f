"""Minimal self-describing certificates and key files.

A certificate is ``b"QCRT" || TLV(version, subject, issuer, sig_alg,
public_key, issuer_signature)``; the issuer signs everything before the
signature field. Chains are one level deep: a CA certificate (the trust
anchor, self-signed) and the server certificate it issued.
"""

from __future__ import annotations

import argparse
import base64
import os
from dataclasses import dataclass
from pathlib import Path

from . import sig as sigmod
from . import tlv
from .config import Sig, parse_sig

MAGIC = b"QCRT"
VERSION = b"\x01"
PEM_BEGIN = b"-----BEGIN QEAAS CERTIFICATE-----"
PEM_END = b"-----END QEAAS CERTIFICATE-----"
TAGS = [1, 2, 3, 4, 5, 6]


class CertificateError(ValueError):
    pass


class ChainInvalid(CertificateError):
    pass


@dataclass(frozen=True)
class Certificate:
    subject: str
    issuer: str
    sig_alg: Sig
    public_key: sigmod.PublicKey
    issuer_signature: bytes = b""

    def tbs(self) -> bytes:
        return MAGIC + tlv.encode([
            (1, VERSION),
            (2, self.subject.encode()),
            (3, self.issuer.encode()),
            (4, bytes([self.sig_alg.value])),
            (5, self.public_key.encode()),
        ])

    def encode(self) -> bytes:
        return self.tbs() + tlv.encode([(6, self.issuer_signature)])

    @classmethod
    def decode(cls, data: bytes) -> "Certificate":
        if data[:4] != MAGIC:
            raise CertificateError("bad certificate magic")
        try:
            version, subject, issuer, alg, pub, signature = tlv.decode(data[4:], TAGS)
            if version != VERSION:
                raise CertificateError(f"unsupported certificate version {version.hex()}")
            if len(alg) != 1:
                raise CertificateError("bad signature algorithm field")
            return cls(
                subject.decode(),
                issuer.decode(),
                Sig(alg[0]),
                sigmod.PublicKey.decode(pub),
                signature,
            )
        except (tlv.TLVError, sigmod.SignatureError, UnicodeDecodeError, ValueError) as exc:
            if isinstance(exc, CertificateError):
                raise
            raise CertificateError(f"malformed certificate: {exc}") from exc


def issue(subject: str, public: sigmod.PublicKey, issuer: str, issuer_key: sigmod.SigningKey) -> Certificate:
    unsigned = Certificate(subject, issuer, issuer_key.alg, public)
    return Certificate(subject, issuer, issuer_key.alg, public, sigmod.sign(issuer_key, unsigned.tbs()))


def self_signed(subject: str, key: sigmod.SigningKey) -> Certificate:
    return issue(subject, key.public, subject, key)


def validate_chain(cert: Certificate, anchor: Certificate) -> None:
    """Raise :class:`ChainInvalid` unless ``anchor`` issued ``cert``."""
    if cert.issuer != anchor.subject:
        raise ChainInvalid(f"issuer {cert.issuer!r} is not the trust anchor {anchor.subject!r}")
    if cert.sig_alg is not anchor.public_key.alg:
        raise ChainInvalid("issuer signature algorithm does not match the anchor key")
    if not sigmod.verify(anchor.public_key, cert.tbs(), cert.issuer_signature):
        raise ChainInvalid("issuer signature does not verify")


@dataclass(frozen=True)
class KeyStore:
    certificate: Certificate
    signing_key: sigmod.SigningKey
    cookie_secret: bytes

    def __post_init__(self):
        if self.certificate.public_key != self.signing_key.public:
            raise CertificateError("certificate does not match the signing key")


@dataclass(frozen=True)
class PKI:
    ca: Certificate
    ca_key: sigmod.SigningKey
    server: Certificate
    server_key: sigmod.SigningKey

    def key_store(self, cookie_secret: bytes | None = None) -> KeyStore:
        return KeyStore(self.server, self.server_key, cookie_secret or os.urandom(32))


def make_pki(alg: Sig, ca_name: str = "qeaas-ca", server_name: str = "qeaas-proxy") -> PKI:
    ca_key = sigmod.generate(alg)
    ca = self_signed(ca_name, ca_key)
    server_key = sigmod.generate(alg)
    return PKI(ca, ca_key, issue(server_name, server_key.public, ca_name, ca_key), server_key)


# -- files -------------------------------------------------------------------

def dump_certificate(cert: Certificate, armor: bool = False) -> bytes:
    raw = cert.encode()
    if not armor:
        return raw
    return PEM_BEGIN + b"\n" + base64.encodebytes(raw) + PEM_END + b"\n"


def load_certificate_bytes(data: bytes) -> Certificate:
    stripped = data.strip()
    if stripped.startswith(PEM_BEGIN):
        body = stripped[len(PEM_BEGIN) :]
        if not body.endswith(PEM_END):
            raise CertificateError("unterminated armored certificate")
        data = base64.b64decode(body[: -len(PEM_END)])
    return Certificate.decode(data)


def load_certificate(path: str | os.PathLike) -> Certificate:
    return load_certificate_bytes(Path(path).read_bytes())


def load_signing_key(path: str | os.PathLike) -> sigmod.SigningKey:
    return sigmod.SigningKey.decode(Path(path).read_bytes())


def load_key_store(cert: str, key: str, cookie_secret: str | None) -> KeyStore:
    secret = Path(cookie_secret).read_bytes() if cookie_secret else os.urandom(32)
    return KeyStore(load_certificate(cert), load_signing_key(key), secret)


def write_pki(outdir: str | os.PathLike, alg: Sig, armor: bool = False) -> PKI:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    pki = make_pki(alg)
    (out / "ca.cert").write_bytes(dump_certificate(pki.ca, armor))
    (out / "ca.key").write_bytes(pki.ca_key.encode())
    (out / "server.cert").write_bytes(dump_certificate(pki.server, armor))
    (out / "server.key").write_bytes(pki.server_key.encode())
    (out / "cookie.secret").write_bytes(os.urandom(32))
    return pki


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description="Generate a CA, server certificate and keys.")
    ap.add_argument("--sig", default="mldsa44", help="mldsa44 or ecdsa")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--base64", action="store_true", help="armor certificates as base64")
    args = ap.parse_args(argv)
    write_pki(args.out, parse_sig(args.sig), args.base64)
    print(f"wrote ca.cert ca.key server.cert server.key cookie.secret to {args.out}")


if __name__ == "__main__":
    main()
