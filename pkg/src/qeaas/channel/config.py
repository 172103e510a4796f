from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Kex(Enum):
    MLKEM512 = 1
    X25519 = 2
    P256 = 3

    @property
    def label(self) -> str:
        return {"MLKEM512": "ML-KEM-512", "X25519": "X25519", "P256": "ECDHE P-256"}[self.name]


class Sig(Enum):
    MLDSA44 = 1
    ECDSA_P256 = 2

    @property
    def label(self) -> str:
        return {"MLDSA44": "ML-DSA-44", "ECDSA_P256": "ECDSA"}[self.name]


class VerifyMode(Enum):
    NO_VERIFY = "no-verify"
    FULL_CHAIN = "full-chain"


def parse_kex(text: str) -> Kex:
    key = text.upper().replace("-", "").replace("_", "")
    aliases = {"MLKEM512": Kex.MLKEM512, "X25519": Kex.X25519, "P256": Kex.P256, "ECDHEP256": Kex.P256}
    try:
        return aliases[key]
    except KeyError:
        raise ValueError(f"unknown key exchange {text!r}") from None


def parse_sig(text: str) -> Sig:
    key = text.upper().replace("-", "").replace("_", "")
    aliases = {"MLDSA44": Sig.MLDSA44, "ECDSA": Sig.ECDSA_P256, "ECDSAP256": Sig.ECDSA_P256}
    try:
        return aliases[key]
    except KeyError:
        raise ValueError(f"unknown signature algorithm {text!r}") from None


@dataclass(frozen=True)
class HandshakeConfig:
    kex: Kex = Kex.MLKEM512
    sig: Sig = Sig.MLDSA44
    verify_mode: VerifyMode = VerifyMode.NO_VERIFY
    mtu_bytes: int = 1400
    force_hrr: bool = True

    def __post_init__(self):
        if self.mtu_bytes < 512:
            raise ValueError("mtu_bytes must be at least 512")

    @property
    def config_id(self) -> str:
        verify = "verify" if self.verify_mode is VerifyMode.FULL_CHAIN else "noverify"
        return f"{self.kex.name}-{self.sig.name}-{verify}"


def all_configs(mtu_bytes: int = 1400) -> list[HandshakeConfig]:
    """The 3 x 2 x 2 benchmark matrix, ECDSA group first."""
    return [
        HandshakeConfig(kex, sig, mode, mtu_bytes)
        for sig in (Sig.ECDSA_P256, Sig.MLDSA44)
        for kex in (Kex.P256, Kex.X25519, Kex.MLKEM512)
        for mode in (VerifyMode.NO_VERIFY, VerifyMode.FULL_CHAIN)
    ]
