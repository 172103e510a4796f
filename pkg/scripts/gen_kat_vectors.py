"""Regenerate the frozen ML-KEM-512 / ML-DSA-44 known-answer vectors.

The vectors come from implementations independent of ``qeaas.pqc``:
kyber-py and dilithium-py (pure Python), with ML-DSA-44 public keys and
signatures additionally cross-checked against OpenSSL through
``cryptography``. Install the oracles with ``pip install -e .[oracles]``.

    python scripts/gen_kat_vectors.py tests/data
"""

import hashlib
import json
import sys
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric import mldsa
from dilithium_py.ml_dsa import ML_DSA_44
from kyber_py.ml_kem import ML_KEM_512

COUNT = 10


def seed(label: str, i: int, n: int = 32) -> bytes:
    return hashlib.shake_256(f"qeaas-kat/{label}/{i}".encode()).digest(n)


def sha256(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def mlkem_vectors():
    out = []
    for i in range(COUNT):
        d, z, m = seed("d", i), seed("z", i), seed("m", i)
        ek, dk = ML_KEM_512._keygen_internal(d, z)
        key, ct = ML_KEM_512._encaps_internal(ek, m)
        assert ML_KEM_512.decaps(dk, ct) == key
        bad = bytes([ct[0] ^ 1]) + ct[1:]
        out.append({
            "d": d.hex(), "z": z.hex(), "m": m.hex(),
            "ek": ek.hex(), "dk_sha256": sha256(dk),
            "ct": ct.hex(), "shared": key.hex(),
            "implicit_reject_ct": bad.hex(),
            "implicit_reject_shared": ML_KEM_512.decaps(dk, bad).hex(),
        })
    return out


def mldsa_vectors():
    out = []
    for i in range(COUNT):
        xi = seed("xi", i)
        msg = seed("msg", i, 1 + 17 * i)
        ctx = seed("ctx", i, i % 3 * 8)
        pk, sk = ML_DSA_44._keygen_internal(xi)
        sig = ML_DSA_44.sign(sk, msg, ctx=ctx, deterministic=True)
        ossl = mldsa.MLDSA44PrivateKey.from_seed_bytes(xi)
        assert ossl.public_key().public_bytes_raw() == pk
        if ctx:
            ossl.public_key().verify(sig, msg, ctx)
        else:
            ossl.public_key().verify(sig, msg)
        out.append({
            "xi": xi.hex(), "msg": msg.hex(), "ctx": ctx.hex(),
            "pk": pk.hex(), "sk_sha256": sha256(sk), "sig": sig.hex(),
        })
    return out


def main(outdir: str) -> None:
    path = Path(outdir)
    path.mkdir(parents=True, exist_ok=True)
    (path / "mlkem512_kat.json").write_text(json.dumps(mlkem_vectors(), indent=1) + "\n")
    (path / "mldsa44_kat.json").write_text(json.dumps(mldsa_vectors(), indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
