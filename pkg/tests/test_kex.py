import pytest
from cryptography.hazmat.primitives.asymmetric import x25519 as cx

from oracles import x25519 as x25519_oracle
from qeaas.channel import kex
from qeaas.channel.config import Kex

h = bytes.fromhex

# RFC 7748 section 5.2 test vector 1
K1 = h("a546e36bf0527c9d3b16154b82465edd62144c0ac1fc5a18506a2244ba449ac4")
U1 = h("e6db6867583030db3594c1a424b15f7c726624ec26b3353b10a903a6d0ab1c4c")
OUT1 = h("c3da55379de9c6908e94ea4df28d084f32eccf03491c71f754b4075577a28552")


def test_oracle_ladder_reproduces_rfc_vector():
    assert x25519_oracle(K1, U1) == OUT1


def test_x25519_exchange_matches_oracle():
    priv, peer = cx.X25519PrivateKey.generate(), cx.X25519PrivateKey.generate()
    peer_pub = peer.public_key().public_bytes_raw()
    secret = kex._dh(Kex.X25519, priv, peer_pub)
    assert secret == x25519_oracle(priv.private_bytes_raw(), peer_pub)


@pytest.mark.parametrize("k", list(Kex))
def test_client_and_server_agree(k):
    share, state = kex.client_share(k)
    assert len(share) == kex.SHARE_SIZES[k][0]
    answer, server_secret = kex.server_exchange(k, share)
    assert len(answer) == kex.SHARE_SIZES[k][1]
    assert kex.client_finish(k, state, answer) == server_secret
    assert len(server_secret) == 32


def test_kem_exchange_single_call_view():
    share, state = kex.client_share(Kex.MLKEM512)
    ct, secret = kex.kem_exchange(Kex.MLKEM512, "server", share)
    empty, secret2 = kex.kem_exchange(Kex.MLKEM512, "client", ct, state)
    assert empty == b"" and secret == secret2
    with pytest.raises(kex.KeyExchangeError):
        kex.kem_exchange(Kex.MLKEM512, "client", ct)
    with pytest.raises(ValueError):
        kex.kem_exchange(Kex.MLKEM512, "peer", ct)


def test_x25519_all_zero_peer_rejected():
    with pytest.raises(kex.KeyExchangeError):
        kex.server_exchange(Kex.X25519, bytes(32))


def test_p256_off_curve_point_rejected():
    share, _ = kex.client_share(Kex.P256)
    bad = share[:-1] + bytes([share[-1] ^ 1])
    with pytest.raises(kex.KeyExchangeError):
        kex.server_exchange(Kex.P256, bad)


@pytest.mark.parametrize("k", list(Kex))
def test_wrong_length_shares_rejected(k):
    share, state = kex.client_share(k)
    with pytest.raises(kex.KeyExchangeError):
        kex.server_exchange(k, share + b"\x00")
    with pytest.raises(kex.KeyExchangeError):
        kex.client_finish(k, state, b"\x04" * 10)


def test_mlkem_bad_ek_becomes_kex_error():
    share, _ = kex.client_share(Kex.MLKEM512)
    with pytest.raises(kex.KeyExchangeError):
        kex.server_exchange(Kex.MLKEM512, b"\xff\x0f" + share[2:])
