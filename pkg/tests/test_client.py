import json
import math

import pytest

from oracles import PoolOracle, blake2s, stream_bytes
from qeaas import client, coap
from qeaas.channel.config import HandshakeConfig, Kex, Sig, VerifyMode
from qeaas.client import (
    ClientConfig, FakeClock, PhaseGuard, bench_handshake, bench_pool, bench_rtt, fetch_entropy,
    parse_entropy, ticks_diff,
)
from qeaas.pool import Pool, PoolConfig
from qeaas.proxy import HttpResult, ProxyConfig, ProxyServer
from qeaas.report import read_csv, summarize
from qeaas.sources import DeterministicSource


def test_ticks_diff_wraps():
    assert ticks_diff(0xFFFFFFF0, 0x10) == 0x20
    assert ticks_diff(5, 9) == 4
    assert ticks_diff(0xFFFF, 0x1, bits=16) == 2
    assert FakeClock([], bits=32).elapsed(2**32 - 1, 0) == 1


def test_phase_guard_flags_pool_use_in_window():
    pool = Pool(DeterministicSource(0))
    guard = PhaseGuard()
    pool.hooks.append(guard)
    pool.extract(4)
    with guard.window("request"):
        pool.extract(4)
    assert guard.violations == [("request", "extract")]


def test_config_defaults_and_validation():
    assert ClientConfig(transport="secure").inter_iteration_delay == 1.0
    assert ClientConfig(transport="plain").inter_iteration_delay == 0.1
    assert ClientConfig(delay=0).inter_iteration_delay == 0
    assert ClientConfig(transport="plain").record_fields() == {"config_id": "plain-coap", "transport": "plain"}
    with pytest.raises(ValueError):
        ClientConfig(iterations=0)
    with pytest.raises(ValueError):
        ClientConfig(transport="tcp")
    with pytest.raises(ValueError):
        ClientConfig(inject_entropy_bits_per_byte=9)


def _resp(payload, code=coap.CONTENT):
    return coap.CoapMessage(coap.MsgType.ACK, code, 1, b"", [], payload)


@pytest.mark.parametrize(
    "payload,err",
    [
        (b"not json", client.JsonParseError),
        (b'{"num_bytes": 2}', client.JsonParseError),
        (b'{"random_bytes": "zz", "num_bytes": 1}', client.HexDecodeError),
        (b'{"random_bytes": 12, "num_bytes": 1}', client.HexDecodeError),
        (b'{"random_bytes": "0011", "num_bytes": 3}', client.HexDecodeError),
    ],
)
def test_parse_entropy_errors(payload, err):
    with pytest.raises(err):
        parse_entropy(_resp(payload))


def test_parse_entropy_ok_and_coap_error():
    assert parse_entropy(_resp(b'{"random_bytes": "00ff", "num_bytes": 2, "source": "x"}')) == b"\x00\xff"
    with pytest.raises(client.CoapErrorResponse):
        parse_entropy(_resp(b"", coap.BAD_REQUEST))


# -- against a live proxy ----------------------------------------------------------------


@pytest.fixture
def secure_proxy(pkis):
    pki = pkis[Sig.MLDSA44]
    hs = HandshakeConfig(Kex.MLKEM512, Sig.MLDSA44)
    proxy = ProxyServer(ProxyConfig(coap_port=0, coaps_port=0, handshake=hs, key_store=pki.key_store()))
    proxy.start()
    yield proxy, hs, pki
    proxy.stop()


@pytest.mark.parametrize("transport", ["plain", "secure"])
def test_fetch_injects_exact_stream_slice(transport, secure_proxy, backend_server):
    proxy, hs, pki = secure_proxy
    port = proxy.coaps_port if transport == "secure" else proxy.coap_port
    cfg = ClientConfig(
        ("127.0.0.1", port), f"http://127.0.0.1:{backend_server.port}/random_number/32", transport, hs, pki.ca,
    )
    pool = Pool(DeterministicSource(5), PoolConfig(threshold_bytes=0))
    oracle = PoolOracle(5, threshold=0)
    r = fetch_entropy(cfg, pool)
    assert r.data == stream_bytes(7, 0, 32)
    oracle.inject(r.data, 256)
    assert r.extracted == oracle.extract(32)
    assert pool.chain_key == oracle.key
    assert r.violations == []
    assert r.client_flights == (3 if transport == "secure" else 0)
    assert min(r.request_us, r.inject_us, r.extract_us) >= 0


def test_bench_handshake_with_scripted_clock(secure_proxy, backend_server):
    proxy, hs, pki = secure_proxy
    cfg = ClientConfig(
        ("127.0.0.1", proxy.coaps_port), f"http://127.0.0.1:{backend_server.port}/random_number/8",
        "secure", hs, pki.ca, iterations=3, warmup=1, delay=0,
    )
    clock = FakeClock([0, 99, 10, 11, 20, 22, 30, 33])
    sleeps = []
    recs = bench_handshake(cfg, clock, sleep=sleeps.append)
    assert [r.latency_us for r in recs] == [1, 2, 3]
    assert [r.iteration for r in recs] == [0, 1, 2]
    assert all(r.flights == 3 and not r.failed and r.phase == "handshake" for r in recs)
    assert sleeps == [0, 0, 0]
    s = summarize(recs)
    assert (s.mean, s.std, s.n) == (2, 1, 3)
    assert s.sem == pytest.approx(1 / math.sqrt(3))


def test_bench_handshake_records_failures(pkis, rogue_pkis, backend_server):
    hs = HandshakeConfig(Kex.X25519, Sig.ECDSA_P256, verify_mode=VerifyMode.FULL_CHAIN)
    store = rogue_pkis[Sig.ECDSA_P256].key_store()
    with ProxyServer(ProxyConfig(coap_port=0, coaps_port=0, handshake=hs, key_store=store)) as proxy:
        cfg = ClientConfig(
            ("127.0.0.1", proxy.coaps_port), f"http://127.0.0.1:{backend_server.port}/random_number/8",
            "secure", hs, pkis[Sig.ECDSA_P256].ca, iterations=2, warmup=0, delay=0,
        )
        recs = bench_handshake(cfg)
    assert [r.failed for r in recs] == [True, True]
    assert all("ChainValidationFailed" in r.error for r in recs)


def test_bench_rtt_plain(secure_proxy, backend_server):
    proxy, hs, pki = secure_proxy
    cfg = ClientConfig(
        ("127.0.0.1", proxy.coap_port), f"http://127.0.0.1:{backend_server.port}/random_number/8",
        "plain", iterations=5, warmup=2,
    )
    recs = bench_rtt(cfg)
    assert len(recs) == 5 and all(not r.failed and r.latency_us > 0 for r in recs)
    assert {r.config_id for r in recs} == {"plain-coap"}


def test_bench_pool_records_and_trend():
    recs = bench_pool((16, 256), n=30, warmup=3, source="test")
    assert len(recs) == 2 * 2 * 30
    assert {(r.phase, r.size) for r in recs} == {(p, s) for p in ("extract", "inject") for s in (16, 256)}
    ext = {s: summarize([r for r in recs if r.phase == "extract" and r.size == s]).mean for s in (16, 256)}
    # informative only: larger extracts hash more blocks
    assert ext[16] > 0 and ext[256] > 0


# -- CLI exit codes --------------------------------------------------------------------------


def _fake_proxy(body: bytes, status=200):
    return ProxyServer(ProxyConfig(coap_port=0, coaps_port=0), lambda u, t: HttpResult(status, body, "application/json"))


def _cli_fetch(port, *extra):
    return client.main(["fetch", "--transport", "plain", "--port", str(port), "--ack-timeout", "0.5", *extra])


@pytest.mark.parametrize(
    "body,status,code",
    [
        (b'{"random_bytes": "00ff", "num_bytes": 2, "source": "t"}', 200, client.EXIT_OK),
        (b"{broken", 200, client.EXIT_JSON),
        (b'{"random_bytes": "0g", "num_bytes": 1, "source": "t"}', 200, client.EXIT_HEX),
        (b"", 400, client.EXIT_COAP),
    ],
)
def test_cli_fetch_exit_codes(body, status, code, capsys):
    with _fake_proxy(body, status) as proxy:
        assert _cli_fetch(proxy.coap_port) == code
    if code == client.EXIT_OK:
        out = json.loads(capsys.readouterr().out)
        assert out["bytes"] == "00ff" and len(bytes.fromhex(out["extracted"])) == 32


def test_cli_transport_failure_exit_code():
    import socket

    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    assert client.main(["fetch", "--transport", "plain", "--port", str(port), "--ack-timeout", "0.05"]) == 3


def test_cli_handshake_failure_exit_code(tmp_path, pkis, rogue_pkis):
    from qeaas.channel import certs

    (tmp_path / "ca.cert").write_bytes(pkis[Sig.ECDSA_P256].ca.encode())
    hs = HandshakeConfig(Kex.P256, Sig.ECDSA_P256)
    store = rogue_pkis[Sig.ECDSA_P256].key_store()
    with ProxyServer(ProxyConfig(coap_port=0, coaps_port=0, handshake=hs, key_store=store)) as proxy:
        code = client.main([
            "fetch", "--port", str(proxy.coaps_port), "--kex", "p256", "--sig", "ecdsa",
            "--verify", "--ca", str(tmp_path / "ca.cert"),
        ])
    assert code == client.EXIT_HANDSHAKE
    assert certs.load_certificate(tmp_path / "ca.cert") == pkis[Sig.ECDSA_P256].ca


def test_cli_bench_pool_writes_outputs(tmp_path, capsys):
    assert client.main(["bench-pool", "--sizes", "16,32", "--iterations", "4", "--warmup", "1",
                        "--out", str(tmp_path)]) == 0
    recs = read_csv(tmp_path / "pool.csv")
    assert len(recs) == 2 * 2 * 4
    summary = json.loads((tmp_path / "pool.json").read_text())
    assert set(summary) == {"pool/extract/16", "pool/extract/32", "pool/inject/16", "pool/inject/32"}


def test_injected_bytes_reach_chain_key():
    pool = Pool(DeterministicSource(3), PoolConfig(threshold_bytes=0))
    key = pool.chain_key
    data = stream_bytes(7, 0, 8)
    pool.inject(data, 64)
    assert pool.chain_key == blake2s(key + b"qeaas/inject" + data)
