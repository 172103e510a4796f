"""End client: fetch entropy through the proxy and benchmark each phase.

Subcommands::

    fetch            one GET through the proxy, inject into the pool, extract 32 bytes
    bench-pool       local inject/extract latency per buffer size
    bench-handshake  fresh session per iteration, timer ends at the first CoAP response
    bench-rtt        request/response latency on one established session

Exit codes: 0 ok, 3 transport, 4 handshake, 5 CoAP error response,
6 JSON parse, 7 hex decode.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import coap
from .channel import certs
from .channel.config import HandshakeConfig, VerifyMode, parse_kex, parse_sig
from .channel.handshake import HandshakeError
from .channel.transport import FLIGHT_TIMEOUT, MAX_RETRIES, UDPTransport, client_handshake
from .pool import Pool, PoolConfig
from .report import BenchRecord, InsufficientData, summarize, write_csv
from .sources import make_source

EXIT_OK, EXIT_TRANSPORT, EXIT_HANDSHAKE, EXIT_COAP, EXIT_JSON, EXIT_HEX = 0, 3, 4, 5, 6, 7
POOL_SIZES = (16, 32, 64, 128, 256)
UDP_MAX = 65507


class ClientError(Exception):
    exit_code = EXIT_TRANSPORT


class TransportError(ClientError):
    exit_code = EXIT_TRANSPORT


class HandshakeFailed(ClientError):
    exit_code = EXIT_HANDSHAKE


class CoapErrorResponse(ClientError):
    exit_code = EXIT_COAP


class JsonParseError(ClientError):
    exit_code = EXIT_JSON


class HexDecodeError(ClientError):
    exit_code = EXIT_HEX


# -- timing ------------------------------------------------------------------------

def ticks_diff(start: int, end: int, bits: int = 32) -> int:
    """Elapsed ticks on a free-running ``bits``-wide counter (unsigned subtraction)."""
    return (end - start) & ((1 << bits) - 1)


class Clock:
    """Microsecond counter; ``bits`` sets the wrap width used by :meth:`elapsed`."""

    bits = 64

    def now(self) -> int:
        return time.perf_counter_ns() // 1000

    def elapsed(self, start: int, end: int) -> int:
        return ticks_diff(start, end, self.bits)


class FakeClock(Clock):
    """Returns scripted tick values, for deterministic harness tests."""

    def __init__(self, ticks, bits: int = 32):
        self._ticks = iter(ticks)
        self.bits = bits

    def now(self) -> int:
        return next(self._ticks)


class PhaseGuard:
    """Pool hook that records any pool operation inside a timed network window."""

    def __init__(self):
        self.phase: str | None = None
        self.violations: list[tuple[str, str]] = []

    def __call__(self, op: str) -> None:
        if self.phase is not None:
            self.violations.append((self.phase, op))

    @contextlib.contextmanager
    def window(self, name: str):
        self.phase = name
        try:
            yield
        finally:
            self.phase = None


# -- configuration -------------------------------------------------------------------

@dataclass
class ClientConfig:
    proxy: tuple[str, int] = ("127.0.0.1", 5684)
    proxy_uri: str = "http://127.0.0.1:6065/random_number/8"
    transport: str = "secure"
    handshake: HandshakeConfig = field(default_factory=HandshakeConfig)
    trust_anchor: certs.Certificate | None = None
    pool: PoolConfig = field(default_factory=PoolConfig)
    pool_source: str = "os-random"
    inject_entropy_bits_per_byte: int = 8
    iterations: int = 100
    warmup: int = 5
    delay: float | None = None
    confirmable: bool = True
    ack_timeout: float = 2.0
    retries: int = MAX_RETRIES

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.transport not in ("plain", "secure"):
            raise ValueError("transport must be plain or secure")
        if not 0 <= self.inject_entropy_bits_per_byte <= 8:
            raise ValueError("inject_entropy_bits_per_byte must be in 0..8")

    @property
    def inter_iteration_delay(self) -> float:
        if self.delay is not None:
            return self.delay
        return 1.0 if self.transport == "secure" else 0.1

    @property
    def config_id(self) -> str:
        return self.handshake.config_id if self.transport == "secure" else "plain-coap"

    def record_fields(self) -> dict:
        if self.transport == "plain":
            return {"config_id": "plain-coap", "transport": "plain"}
        h = self.handshake
        return {
            "config_id": h.config_id, "transport": "secure", "kex": h.kex.label,
            "sig": h.sig.label, "verify": h.verify_mode.value,
        }


# -- CoAP exchanges ----------------------------------------------------------------

class _PlainLink:
    def __init__(self, addr):
        self.udp = UDPTransport(addr, UDP_MAX)

    def send(self, data: bytes) -> None:
        self.udp.send(data)

    def recv(self, timeout: float) -> bytes:
        return self.udp.recv(timeout)

    def close(self) -> None:
        self.udp.close()


def exchange(
    link, request: coap.CoapMessage, ack_timeout: float = 2.0, retries: int = MAX_RETRIES,
    already_sent: bool = False,
) -> coap.CoapMessage:
    """Send ``request`` and wait for its response.

    A CON is retransmitted up to ``retries`` times with the timeout doubling
    each time; a NON is sent once and waits for the same total span.
    """
    wire = coap.encode(request)
    if not already_sent:
        link.send(wire)
    confirmable = request.msg_type == coap.MsgType.CON
    timeout = ack_timeout
    budget = ack_timeout * (2 ** (retries + 1) - 1)
    deadline = time.monotonic() + (timeout if confirmable else budget)
    attempt = 0
    acked = False
    while True:
        try:
            data = link.recv(deadline - time.monotonic())
        except TimeoutError:
            if confirmable and not acked and attempt < retries:
                attempt += 1
                timeout *= 2
                link.send(wire)
                deadline = time.monotonic() + timeout
                continue
            raise TransportError(f"no CoAP response after {attempt} retransmissions") from None
        try:
            msg = coap.decode(data)
        except coap.MalformedMessage:
            continue
        if msg.msg_type == coap.MsgType.ACK and msg.code == coap.EMPTY and msg.message_id == request.message_id:
            # separate response follows; stop retransmitting
            acked = True
            deadline = time.monotonic() + budget
            continue
        if msg.msg_type == coap.MsgType.RST and msg.message_id == request.message_id:
            raise TransportError("request reset by peer")
        if not coap.match_response(request, msg):
            continue
        if msg.msg_type == coap.MsgType.CON:
            link.send(coap.encode(coap.CoapMessage(coap.MsgType.ACK, coap.EMPTY, msg.message_id)))
        return msg


class Connection:
    """One plain socket or one secure session, with per-request message IDs."""

    def __init__(self, config: ClientConfig):
        self.config = config
        self._mid = int.from_bytes(os.urandom(2), "big")
        self.link = None
        self.client_flights = 0

    def _next_request(self) -> coap.CoapMessage:
        self._mid = (self._mid + 1) & 0xFFFF
        return coap.get_request(self.config.proxy_uri, self._mid, coap.new_token(), self.config.confirmable)

    def open_and_request(self) -> coap.CoapMessage:
        """Create the session (bind or handshake) and complete the first request."""
        cfg = self.config
        req = self._next_request()
        if cfg.transport == "plain":
            self.link = _PlainLink(cfg.proxy)
            return exchange(self.link, req, cfg.ack_timeout, cfg.retries)
        udp = UDPTransport(cfg.proxy, cfg.handshake.mtu_bytes)
        try:
            self.link = client_handshake(
                udp, cfg.handshake, cfg.trust_anchor, first_app=coap.encode(req),
                timeout=FLIGHT_TIMEOUT, retries=cfg.retries,
            )
        except HandshakeError as exc:
            udp.close()
            raise HandshakeFailed(f"{type(exc).__name__}: {exc}") from exc
        except OSError as exc:
            udp.close()
            raise TransportError(str(exc)) from exc
        self.client_flights = self.link.client_flights
        return exchange(self.link, req, cfg.ack_timeout, cfg.retries, already_sent=True)

    def request(self) -> coap.CoapMessage:
        if self.link is None:
            raise TransportError("connection not open")
        return exchange(self.link, self._next_request(), self.config.ack_timeout, self.config.retries)

    def close(self) -> None:
        if self.link is not None:
            self.link.close()
            self.link = None


def parse_entropy(msg: coap.CoapMessage) -> bytes:
    if msg.code != coap.CONTENT:
        raise CoapErrorResponse(f"proxy answered {coap.code_str(msg.code)}: {msg.payload[:80]!r}")
    try:
        obj = json.loads(msg.payload)
        hex_text, n = obj["random_bytes"], int(obj["num_bytes"])
    except (ValueError, KeyError, TypeError) as exc:
        raise JsonParseError(f"bad JSON payload: {exc}") from exc
    try:
        if not isinstance(hex_text, str):
            raise ValueError("random_bytes is not text")
        data = bytes.fromhex(hex_text)
    except ValueError as exc:
        raise HexDecodeError(f"bad hex in random_bytes: {exc}") from exc
    if len(data) != n:
        raise HexDecodeError(f"decoded {len(data)} bytes but num_bytes is {n}")
    return data


# -- operations --------------------------------------------------------------------------

@dataclass
class FetchResult:
    data: bytes
    extracted: bytes
    request_us: int
    inject_us: int
    extract_us: int
    client_flights: int
    violations: list = field(default_factory=list)


def fetch_entropy(config: ClientConfig, pool: Pool | None = None, clock: Clock | None = None) -> FetchResult:
    clock = clock or Clock()
    pool = pool or Pool(make_source(config.pool_source), config.pool)
    guard = PhaseGuard()
    pool.hooks.append(guard)
    conn = Connection(config)
    try:
        with guard.window("request"):
            t0 = clock.now()
            msg = conn.open_and_request()
            t1 = clock.now()
    finally:
        conn.close()
    data = parse_entropy(msg)
    t2 = clock.now()
    pool.inject(data, len(data) * config.inject_entropy_bits_per_byte)
    t3 = clock.now()
    out = pool.extract(32)
    t4 = clock.now()
    pool.hooks.remove(guard)
    return FetchResult(
        data, out, clock.elapsed(t0, t1), clock.elapsed(t2, t3), clock.elapsed(t3, t4),
        conn.client_flights, guard.violations,
    )


def bench_pool(
    sizes=POOL_SIZES, n: int = 100, warmup: int = 5, clock: Clock | None = None,
    source: str = "os-random", config: PoolConfig | None = None,
) -> list[BenchRecord]:
    """Time extract and inject per size with refill disabled."""
    clock = clock or Clock()
    base = config or PoolConfig()
    cfg = PoolConfig(base.capacity_bytes, 0, base.credit_per_backend_byte, base.credit_per_injected_byte_cap)
    pool = Pool(make_source(source), cfg)
    records = []
    for size in sizes:
        payload = os.urandom(size)
        for phase, op in (("extract", lambda: pool.extract(size)), ("inject", lambda: pool.inject(payload, 8 * size))):
            for i in range(warmup + n):
                t0 = clock.now()
                op()
                t1 = clock.now()
                if i >= warmup:
                    records.append(BenchRecord(
                        "pool", "local", phase, i - warmup, max(clock.elapsed(t0, t1), 1e-3), size=size,
                    ))
    return records


def bench_handshake(
    config: ClientConfig, clock: Clock | None = None, sleep: Callable[[float], None] = time.sleep,
    on_iteration: Callable[[BenchRecord], None] | None = None,
) -> list[BenchRecord]:
    """Fresh session per iteration; failures are recorded and the run continues."""
    clock = clock or Clock()
    fields = config.record_fields()
    records = []
    for i in range(config.warmup + config.iterations):
        if i:
            sleep(config.inter_iteration_delay)
        conn = Connection(config)
        error, failed = "", False
        t0 = clock.now()
        try:
            msg = conn.open_and_request()
            t1 = clock.now()
            if msg.code != coap.CONTENT:
                failed, error = True, f"coap {coap.code_str(msg.code)}"
        except ClientError as exc:
            t1 = clock.now()
            failed, error = True, f"{type(exc).__name__}: {exc}"
        finally:
            conn.close()
        if i < config.warmup:
            continue
        rec = BenchRecord(
            **fields, phase="handshake", iteration=i - config.warmup,
            latency_us=clock.elapsed(t0, t1) if not failed else 0.0,
            failed=failed, flights=conn.client_flights, error=error,
        )
        records.append(rec)
        if on_iteration:
            on_iteration(rec)
    return records


def bench_rtt(config: ClientConfig, clock: Clock | None = None) -> list[BenchRecord]:
    """Request latency on one established session (the opening request is not timed)."""
    clock = clock or Clock()
    fields = config.record_fields()
    conn = Connection(config)
    records = []
    try:
        conn.open_and_request()
        for i in range(config.warmup + config.iterations):
            t0 = clock.now()
            try:
                msg = conn.request()
                failed = msg.code != coap.CONTENT
                error = "" if not failed else f"coap {coap.code_str(msg.code)}"
            except TransportError as exc:
                failed, error = True, f"session lost: {exc}"
            t1 = clock.now()
            if i >= config.warmup:
                records.append(BenchRecord(
                    **fields, phase="rtt", iteration=i - config.warmup,
                    latency_us=clock.elapsed(t0, t1) if not failed else 0.0, failed=failed, error=error,
                ))
    finally:
        conn.close()
    return records


# -- CLI ----------------------------------------------------------------------------------

def _summary_json(records: list[BenchRecord]) -> dict:
    groups: dict = {}
    for r in records:
        groups.setdefault(f"{r.config_id}/{r.phase}/{r.size}", []).append(r)
    out = {}
    for key, recs in sorted(groups.items()):
        try:
            s = summarize(recs)
            out[key] = {"mean_us": s.mean, "std_us": s.std, "sem_us": s.sem, "n": s.n, "failed": s.failed,
                        "min_us": s.min, "max_us": s.max}
        except InsufficientData:
            out[key] = {"n": sum(not r.failed for r in recs), "failed": sum(r.failed for r in recs)}
    return out


def _write(records: list[BenchRecord], out: str | None, stem: str) -> None:
    summary = _summary_json(records)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        write_csv(records, d / f"{stem}.csv")
        (d / f"{stem}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for key, s in summary.items():
        if "mean_us" in s:
            print(f"{key}: {s['mean_us']:.1f} +/- {s['std_us']:.1f} us (n={s['n']}, failed={s['failed']})")
        else:
            print(f"{key}: n={s['n']} failed={s['failed']}")


def _config_from_args(args) -> ClientConfig:
    hs = HandshakeConfig(
        parse_kex(args.kex), parse_sig(args.sig),
        VerifyMode.FULL_CHAIN if args.verify else VerifyMode.NO_VERIFY, args.mtu, not args.no_hrr,
    )
    anchor = certs.load_certificate(args.ca) if args.ca else None
    if args.verify and anchor is None:
        raise ValueError("--verify needs --ca")
    port = args.port or (5684 if args.transport == "secure" else 5683)
    pool = PoolConfig(args.capacity, args.threshold)
    return ClientConfig(
        (args.host, port), args.uri, args.transport, hs, anchor, pool, args.pool_source, args.entropy_bits,
        args.iterations, args.warmup, args.delay, not args.non, args.ack_timeout,
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--host", default="127.0.0.1", help="proxy host")
    p.add_argument("--port", type=int, help="proxy port (default 5684 secure, 5683 plain)")
    p.add_argument("--uri", default="http://127.0.0.1:6065/random_number/8", help="Proxy-Uri")
    p.add_argument("--transport", choices=("plain", "secure"), default="secure")
    p.add_argument("--kex", default="ML-KEM-512")
    p.add_argument("--sig", default="ML-DSA-44")
    p.add_argument("--verify", action="store_true", help="validate the certificate chain")
    p.add_argument("--ca", help="trust anchor certificate")
    p.add_argument("--mtu", type=int, default=1400)
    p.add_argument("--no-hrr", action="store_true", help="skip the HelloRetryRequest round trip")
    p.add_argument("--non", action="store_true", help="send NON instead of CON requests")
    p.add_argument("--ack-timeout", type=float, default=2.0)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--delay", type=float, help="seconds between iterations (default 1.0 secure, 0.1 plain)")
    p.add_argument("--capacity", type=int, default=512)
    p.add_argument("--threshold", type=int, default=128)
    p.add_argument("--pool-source", default="os-random")
    p.add_argument("--entropy-bits", type=int, default=8, help="credit claimed per injected byte")
    p.add_argument("--out", help="directory for CSV and JSON output")


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(description="Entropy client and benchmark driver")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("fetch", "bench-handshake", "bench-rtt"):
        _add_common(sub.add_parser(name))
    bp = sub.add_parser("bench-pool")
    bp.add_argument("--sizes", default=",".join(map(str, POOL_SIZES)))
    bp.add_argument("--iterations", type=int, default=100)
    bp.add_argument("--warmup", type=int, default=5)
    bp.add_argument("--out")
    args = ap.parse_args(argv)

    if args.cmd == "bench-pool":
        sizes = [int(s) for s in args.sizes.split(",")]
        _write(bench_pool(sizes, args.iterations, args.warmup), args.out, "pool")
        return EXIT_OK
    try:
        config = _config_from_args(args)
    except ValueError as exc:
        ap.error(str(exc))
    try:
        if args.cmd == "fetch":
            r = fetch_entropy(config)
            print(json.dumps({
                "bytes": r.data.hex(), "extracted": r.extracted.hex(), "request_us": r.request_us,
                "inject_us": r.inject_us, "extract_us": r.extract_us,
            }))
        elif args.cmd == "bench-handshake":
            _write(bench_handshake(config), args.out, f"handshake_{config.config_id}")
        else:
            _write(bench_rtt(config), args.out, f"rtt_{config.config_id}")
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
