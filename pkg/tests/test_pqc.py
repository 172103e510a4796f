import hashlib
import json
import os

import pytest
from cryptography.hazmat.primitives.asymmetric import mldsa as ossl_mldsa
from cryptography.hazmat.primitives.asymmetric import mlkem as ossl_mlkem

from conftest import DATA
from qeaas.pqc import mldsa, mlkem

KEM_KAT = json.loads((DATA / "mlkem512_kat.json").read_text())
DSA_KAT = json.loads((DATA / "mldsa44_kat.json").read_text())
h = bytes.fromhex


@pytest.mark.parametrize("v", KEM_KAT, ids=range(len(KEM_KAT)))
def test_mlkem512_kat(v):
    ek, dk = mlkem.keygen_internal(h(v["d"]), h(v["z"]))
    assert ek.hex() == v["ek"]
    assert hashlib.sha256(dk).hexdigest() == v["dk_sha256"]
    shared, ct = mlkem.encaps_internal(ek, h(v["m"]))
    assert ct.hex() == v["ct"]
    assert shared.hex() == v["shared"]
    assert mlkem.decaps(dk, ct) == shared
    assert mlkem.decaps(dk, h(v["implicit_reject_ct"])).hex() == v["implicit_reject_shared"]


@pytest.mark.parametrize("v", DSA_KAT, ids=range(len(DSA_KAT)))
def test_mldsa44_kat(v):
    pk, sk = mldsa.keygen_internal(h(v["xi"]))
    assert pk.hex() == v["pk"]
    assert hashlib.sha256(sk).hexdigest() == v["sk_sha256"]
    sig = mldsa.sign(sk, h(v["msg"]), h(v["ctx"]), deterministic=True)
    assert sig.hex() == v["sig"]
    assert mldsa.verify(pk, h(v["msg"]), sig, h(v["ctx"]))


def test_sizes():
    p = mlkem.ML_KEM_512
    assert (p.ek_size, p.dk_size, p.ct_size) == (800, 1632, 768)
    assert (mldsa.PK_SIZE, mldsa.SK_SIZE, mldsa.SIG_SIZE) == (1312, 2560, 2420)


def test_mlkem768_matches_openssl():
    for _ in range(3):
        seed = os.urandom(64)
        ref = ossl_mlkem.MLKEM768PrivateKey.from_seed_bytes(seed)
        ek, dk = mlkem.keygen_internal(seed[:32], seed[32:], mlkem.ML_KEM_768)
        assert ek == ref.public_key().public_bytes_raw()
        shared, ct = ref.public_key().encapsulate()
        assert mlkem.decaps(dk, ct, mlkem.ML_KEM_768) == shared
        shared, ct = mlkem.encaps(ek, mlkem.ML_KEM_768)
        assert ref.decapsulate(ct) == shared


def test_mldsa44_interoperates_with_openssl():
    xi = os.urandom(32)
    ref = ossl_mldsa.MLDSA44PrivateKey.from_seed_bytes(xi)
    pk, sk = mldsa.keygen_internal(xi)
    assert pk == ref.public_key().public_bytes_raw()
    msg = b"certificate verify"
    ref.public_key().verify(mldsa.sign(sk, msg), msg)
    assert mldsa.verify(pk, msg, ref.sign(msg))


def test_mlkem_randomized_round_trip():
    ek, dk = mlkem.keygen()
    shared, ct = mlkem.encaps(ek)
    assert mlkem.decaps(dk, ct) == shared and len(shared) == 32


def test_mlkem_rejects_malformed_inputs():
    ek, dk = mlkem.keygen()
    with pytest.raises(mlkem.MLKEMError):
        mlkem.encaps(ek[:-1])
    # first coefficient 0xFFF >= q fails the modulus check
    with pytest.raises(mlkem.MLKEMError):
        mlkem.encaps(b"\xff\x0f" + ek[2:])
    with pytest.raises(mlkem.MLKEMError):
        mlkem.decaps(dk, b"\x00" * 767)
    bad_dk = bytearray(dk)
    bad_dk[900] ^= 1
    with pytest.raises(mlkem.MLKEMError):
        mlkem.decaps(bytes(bad_dk), b"\x00" * 768)


def test_mlkem_tampered_ciphertext_implicitly_rejects():
    ek, dk = mlkem.keygen()
    shared, ct = mlkem.encaps(ek)
    bad = bytes([ct[0] ^ 0x80]) + ct[1:]
    out = mlkem.decaps(dk, bad)
    assert out != shared and len(out) == 32


def test_mldsa_rejects_tampering():
    pk, sk = mldsa.keygen()
    sig = mldsa.sign(sk, b"m", b"ctx")
    assert mldsa.verify(pk, b"m", sig, b"ctx")
    assert not mldsa.verify(pk, b"m", sig)
    assert not mldsa.verify(pk, b"n", sig, b"ctx")
    assert not mldsa.verify(pk, b"m", sig[:-1], b"ctx")
    for pos in (0, 100, 2400):
        bad = bytearray(sig)
        bad[pos] ^= 1
        assert not mldsa.verify(pk, b"m", bytes(bad), b"ctx")


def test_mldsa_hedged_signatures_differ():
    pk, sk = mldsa.keygen()
    a, b = mldsa.sign(sk, b"x"), mldsa.sign(sk, b"x")
    assert a != b
    assert mldsa.verify(pk, b"x", a) and mldsa.verify(pk, b"x", b)


def test_mldsa_context_too_long():
    _, sk = mldsa.keygen()
    with pytest.raises(mldsa.MLDSAError):
        mldsa.sign(sk, b"x", b"c" * 256)


def test_against_pure_python_oracles():
    kyber = pytest.importorskip("kyber_py.ml_kem")
    dil = pytest.importorskip("dilithium_py.ml_dsa")
    ek, dk = kyber.ML_KEM_512.keygen()
    shared, ct = mlkem.encaps(ek)
    assert kyber.ML_KEM_512.decaps(dk, ct) == shared
    pk, sk = dil.ML_DSA_44.keygen()
    assert mldsa.verify(pk, b"msg", dil.ML_DSA_44.sign(sk, b"msg"))
