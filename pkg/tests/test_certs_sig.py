import os

import pytest

from qeaas.channel import certs, cookie, sig
from qeaas.channel.config import Sig, all_configs, parse_kex, parse_sig, HandshakeConfig, Kex


@pytest.mark.parametrize("alg", list(Sig))
def test_sign_verify(alg):
    key = sig.generate(alg)
    s = sig.sign_transcript(key, bytes(32))
    assert sig.verify_transcript(key.public, bytes(32), s)
    assert not sig.verify_transcript(key.public, b"\x01" + bytes(31), s)
    assert not sig.verify(key.public, bytes(32), s[:-1] + bytes([s[-1] ^ 1]))


@pytest.mark.parametrize("alg", list(Sig))
def test_key_encoding_round_trip(alg):
    key = sig.generate(alg)
    back = sig.SigningKey.decode(key.encode())
    assert back.public == key.public
    assert sig.verify(key.public, b"m", sig.sign(back, b"m"))
    assert sig.PublicKey.decode(key.public.encode()) == key.public


@pytest.mark.parametrize("data", [b"", b"\x09abc", b"\x01" + bytes(10), b"\x02" + bytes(5)])
def test_bad_key_encodings(data):
    with pytest.raises(sig.SignatureError):
        sig.PublicKey.decode(data)
    with pytest.raises(sig.SignatureError):
        sig.SigningKey.decode(data)


def test_chain_validation(pkis, rogue_pkis):
    for alg in Sig:
        pki = pkis[alg]
        certs.validate_chain(pki.server, pki.ca)
        # same CA name, different key: only the signature check catches it
        with pytest.raises(certs.ChainInvalid):
            certs.validate_chain(rogue_pkis[alg].server, pki.ca)
    with pytest.raises(certs.ChainInvalid):
        certs.validate_chain(pkis[Sig.MLDSA44].server, pkis[Sig.ECDSA_P256].ca)


def test_wrong_issuer_name(pkis):
    pki = certs.make_pki(Sig.ECDSA_P256, ca_name="other-ca")
    with pytest.raises(certs.ChainInvalid, match="issuer"):
        certs.validate_chain(pki.server, pkis[Sig.ECDSA_P256].ca)


def test_certificate_round_trip_and_sizes(pkis):
    for alg, pki in pkis.items():
        raw = pki.server.encode()
        assert certs.Certificate.decode(raw) == pki.server
        armored = certs.dump_certificate(pki.server, armor=True)
        assert certs.load_certificate_bytes(armored) == pki.server
    assert len(pkis[Sig.MLDSA44].server.encode()) > 3700
    assert len(pkis[Sig.ECDSA_P256].server.encode()) < 200


@pytest.mark.parametrize("mutate", [lambda b: b"XCRT" + b[4:], lambda b: b[:-1], lambda b: b + b"\x00"])
def test_malformed_certificates(pkis, mutate):
    with pytest.raises(certs.CertificateError):
        certs.Certificate.decode(mutate(pkis[Sig.ECDSA_P256].server.encode()))


def test_key_store_mismatch(pkis):
    a, b = pkis[Sig.ECDSA_P256], pkis[Sig.MLDSA44]
    with pytest.raises(certs.CertificateError):
        certs.KeyStore(a.server, b.server_key, bytes(32))


def test_write_and_load_pki(tmp_path):
    certs.main(["--sig", "ecdsa", "--out", str(tmp_path), "--base64"])
    store = certs.load_key_store(
        tmp_path / "server.cert", tmp_path / "server.key", tmp_path / "cookie.secret"
    )
    ca = certs.load_certificate(tmp_path / "ca.cert")
    certs.validate_chain(store.certificate, ca)
    assert len(store.cookie_secret) == 32


def test_cookie_mint_check():
    secret, ch1 = os.urandom(32), os.urandom(32)
    addr = ("10.0.0.1", 5684)
    c = cookie.mint(secret, addr, ch1, now=1000)
    assert cookie.Cookie.decode(c.encode()) == c and len(c.encode()) == 72
    cookie.check(secret, addr, c, now=1030)
    cookie.check(secret, addr, c, now=1060)
    with pytest.raises(cookie.CookieError, match="expired"):
        cookie.check(secret, addr, c, now=1061)
    with pytest.raises(cookie.CookieError, match="future"):
        cookie.check(secret, addr, c, now=994)
    with pytest.raises(cookie.CookieError):
        cookie.check(secret, ("10.0.0.1", 5685), c, now=1000)
    with pytest.raises(cookie.CookieError):
        cookie.check(os.urandom(32), addr, c, now=1000)
    forged = cookie.Cookie(ch1, 2000, c.mac)
    with pytest.raises(cookie.CookieError):
        cookie.check(secret, addr, forged, now=2000)
    with pytest.raises(cookie.CookieError):
        cookie.Cookie.decode(b"x" * 71)


def test_config_parsing_and_matrix():
    assert parse_kex("ml-kem-512") is Kex.MLKEM512 and parse_kex("ecdhe-p256") is Kex.P256
    assert parse_sig("ML-DSA-44") is Sig.MLDSA44 and parse_sig("ecdsa") is Sig.ECDSA_P256
    with pytest.raises(ValueError):
        parse_kex("rsa")
    with pytest.raises(ValueError):
        HandshakeConfig(mtu_bytes=100)
    matrix = all_configs()
    assert len(matrix) == 12 and len({c.config_id for c in matrix}) == 12
