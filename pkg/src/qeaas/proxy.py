"""CoAP to HTTP forward proxy over plain UDP and the secure channel.

A GET carrying Proxy-Uri is fetched with HTTP/1.1 and the result mapped to
a CoAP response:

=================  ==========================
HTTP outcome       CoAP code
=================  ==========================
2xx                2.05 Content (+ Content-Format 50 when JSON)
3xx                5.02 (redirects are not followed)
4xx                4.00
5xx, 1xx, other    5.02
timeout / refused  5.04
=================  ==========================
"""

from __future__ import annotations

import argparse
import http.client
import logging
import os
import socket
import threading
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable
from urllib.parse import urlsplit

from . import coap
from .channel import certs
from .channel.config import HandshakeConfig, VerifyMode, parse_kex, parse_sig
from .channel.handshake import ChannelServer
from .channel.transport import RECV_BUFFER

log = logging.getLogger("qeaas.proxy")

DEFAULT_COAP_PORT = 5683
DEFAULT_COAPS_PORT = 5684
DEDUP_ENTRIES = 1024


class BackendTimeout(Exception):
    pass


class BadProxyUri(ValueError):
    pass


@dataclass(frozen=True)
class HttpResult:
    status: int
    body: bytes
    content_type: str = ""


Fetcher = Callable[[str, float], HttpResult]


def parse_proxy_uri(uri: str | None, allowed_origin: str | None = None) -> tuple[str, int, str]:
    if not uri:
        raise BadProxyUri("missing Proxy-Uri")
    if len(uri.encode()) > coap.MAX_PROXY_URI:
        raise BadProxyUri("Proxy-Uri too long")
    try:
        parts = urlsplit(uri)
        port = parts.port or 80
    except ValueError as exc:
        raise BadProxyUri(str(exc)) from None
    if parts.scheme != "http" or not parts.hostname:
        raise BadProxyUri(f"unsupported Proxy-Uri {uri!r}")
    if allowed_origin is not None:
        origin = urlsplit(allowed_origin)
        if (parts.hostname, port) != (origin.hostname, origin.port or 80):
            raise BadProxyUri(f"Proxy-Uri outside the configured backend {allowed_origin}")
    path = parts.path or "/"
    if parts.query:
        path += "?" + parts.query
    return parts.hostname, port, path


def http_get(uri: str, timeout: float) -> HttpResult:
    host, port, path = parse_proxy_uri(uri)
    conn = http.client.HTTPConnection(host, port, timeout=timeout)
    try:
        conn.request("GET", path, headers={"Accept": "application/json"})
        resp = conn.getresponse()
        return HttpResult(resp.status, resp.read(), resp.getheader("Content-Type", ""))
    except (socket.timeout, TimeoutError, ConnectionError, OSError) as exc:
        raise BackendTimeout(f"backend unreachable: {exc}") from exc
    except http.client.HTTPException as exc:
        return HttpResult(502, str(exc).encode())
    finally:
        conn.close()


def map_status(status: int) -> int:
    cls = status // 100
    if cls == 2:
        return coap.CONTENT
    if cls == 4:
        return coap.BAD_REQUEST
    return coap.BAD_GATEWAY


def _reply(req: coap.CoapMessage, code: int, payload: bytes = b"", options=None) -> coap.CoapMessage:
    if req.msg_type == coap.MsgType.CON:
        mtype, mid = coap.MsgType.ACK, req.message_id
    else:
        mtype, mid = coap.MsgType.NON, int.from_bytes(os.urandom(2), "big")
    return coap.CoapMessage(mtype, code, mid, req.token, list(options or []), payload)


def handle_coap(
    msg: coap.CoapMessage,
    fetch: Fetcher = http_get,
    timeout: float = 2.0,
    allowed_origin: str | None = None,
) -> coap.CoapMessage | None:
    """Build the response to one request; ``None`` for messages needing no answer."""
    if msg.msg_type in (coap.MsgType.ACK, coap.MsgType.RST):
        return None
    if msg.code == coap.EMPTY:
        # CoAP ping
        return coap.CoapMessage(coap.MsgType.RST, coap.EMPTY, msg.message_id)
    if msg.code != coap.GET:
        return _reply(msg, coap.METHOD_NOT_ALLOWED)
    try:
        parse_proxy_uri(msg.proxy_uri, allowed_origin)
    except BadProxyUri as exc:
        return _reply(msg, coap.BAD_REQUEST, str(exc).encode())
    try:
        result = fetch(msg.proxy_uri, timeout)
    except BadProxyUri as exc:
        return _reply(msg, coap.BAD_REQUEST, str(exc).encode())
    except BackendTimeout:
        return _reply(msg, coap.GATEWAY_TIMEOUT)
    code = map_status(result.status)
    if code != coap.CONTENT:
        return _reply(msg, code)
    opts = []
    if "json" in result.content_type:
        opts.append((coap.CONTENT_FORMAT, bytes([coap.FORMAT_JSON])))
    return _reply(msg, code, result.body, opts)


@dataclass
class ProxyConfig:
    host: str = "127.0.0.1"
    coap_port: int = DEFAULT_COAP_PORT
    coaps_port: int = DEFAULT_COAPS_PORT
    backend_timeout: float = 2.0
    handshake: HandshakeConfig = field(default_factory=HandshakeConfig)
    key_store: certs.KeyStore | None = None
    backend_url: str | None = None
    workers: int = 16

    def __post_init__(self):
        if self.coap_port == self.coaps_port and self.coap_port != 0:
            raise ValueError("plain and secure ports must differ")


class _Dedup:
    """Replays the cached response when a CON is retransmitted."""

    def __init__(self, size: int = DEDUP_ENTRIES):
        self.size = size
        self._lock = threading.Lock()
        self._cache: OrderedDict = OrderedDict()

    def get(self, key):
        with self._lock:
            return self._cache.get(key)

    def put(self, key, value) -> None:
        with self._lock:
            self._cache[key] = value
            while len(self._cache) > self.size:
                self._cache.popitem(last=False)


class ProxyServer:
    def __init__(self, config: ProxyConfig, fetch: Fetcher = http_get):
        self.config = config
        self.fetch = fetch
        self.channel = None
        if config.key_store is not None:
            # raises on a key store / config algorithm mismatch
            self.channel = ChannelServer(config.handshake, config.key_store)
        self._plain: socket.socket | None = None
        self._secure: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._pool = ThreadPoolExecutor(config.workers, thread_name_prefix="proxy")
        self._stop = threading.Event()
        self._dedup = _Dedup()
        self.requests = 0
        self.malformed = 0

    @property
    def coap_port(self) -> int:
        return self._plain.getsockname()[1]

    @property
    def coaps_port(self) -> int:
        return self._secure.getsockname()[1] if self._secure else 0

    def _bind(self, port: int) -> socket.socket:
        family = socket.AF_INET6 if ":" in self.config.host else socket.AF_INET
        s = socket.socket(family, socket.SOCK_DGRAM)
        try:
            s.bind((self.config.host, port))
        except OSError:
            s.close()
            raise
        s.settimeout(0.2)
        return s

    def start(self) -> "ProxyServer":
        self._plain = self._bind(self.config.coap_port)
        try:
            if self.channel is not None:
                self._secure = self._bind(self.config.coaps_port)
        except OSError:
            self._plain.close()
            raise
        self._spawn(self._plain_loop, "coap")
        if self._secure is not None:
            self._spawn(self._secure_loop, "coaps")
        return self

    def _spawn(self, target, name: str) -> None:
        t = threading.Thread(target=target, name=name, daemon=True)
        t.start()
        self._threads.append(t)

    def stop(self) -> None:
        """Stop receiving, then wait for in-flight requests to finish."""
        self._stop.set()
        for t in self._threads:
            t.join()
        self._pool.shutdown(wait=True)
        for s in (self._plain, self._secure):
            if s is not None:
                s.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _recv(self, sock: socket.socket):
        while not self._stop.is_set():
            try:
                yield sock.recvfrom(RECV_BUFFER)
            except socket.timeout:
                continue
            except OSError:
                if self._stop.is_set():
                    return
                # ICMP errors from earlier sends surface here on some platforms
                continue

    def _plain_loop(self) -> None:
        for data, addr in self._recv(self._plain):
            self._pool.submit(self._serve, data, addr, "coap", self._plain.sendto)

    def _secure_loop(self) -> None:
        for data, addr in self._recv(self._secure):
            result = self.channel.handle(data, addr)
            for d in result.out:
                self._secure.sendto(d, addr)
            session = self.channel.sessions.get(addr)
            for plaintext in result.app:
                def send(reply: bytes, to, session=session):
                    self._secure.sendto(session.seal(reply), to)
                self._pool.submit(self._serve, plaintext, addr, "coaps", send)

    def _serve(self, data: bytes, addr, transport: str, send) -> None:
        t0 = time.perf_counter()
        try:
            msg = coap.decode(data)
        except coap.MalformedMessage as exc:
            self.malformed += 1
            log.info("%s %s:%d malformed %s", transport, addr[0], addr[1], type(exc).__name__)
            return
        key = (transport, addr, msg.message_id)
        cached = self._dedup.get(key) if msg.msg_type == coap.MsgType.CON else None
        if cached is not None:
            send(cached, addr)
            return
        try:
            reply = handle_coap(msg, self.fetch, self.config.backend_timeout, self.config.backend_url)
        except Exception:
            log.exception("request handling failed")
            reply = _reply(msg, coap.INTERNAL_SERVER_ERROR)
        if reply is None:
            return
        wire = coap.encode(reply)
        if msg.msg_type == coap.MsgType.CON:
            self._dedup.put(key, wire)
        self.requests += 1
        try:
            send(wire, addr)
        except OSError as exc:
            log.warning("send to %s failed: %s", addr, exc)
        log.info(
            "%s %s:%d %s %s %.1fms", transport, addr[0], addr[1], coap.code_str(reply.code),
            msg.proxy_uri or "-", (time.perf_counter() - t0) * 1e3,
        )


def serve(config: ProxyConfig, fetch: Fetcher = http_get) -> ProxyServer:
    return ProxyServer(config, fetch).start()


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description="CoAP to HTTP forward proxy")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--coap-port", type=int, default=DEFAULT_COAP_PORT)
    ap.add_argument("--coaps-port", type=int, default=DEFAULT_COAPS_PORT)
    ap.add_argument("--backend-url", help="only forward to this origin, e.g. http://127.0.0.1:6065")
    ap.add_argument("--backend-timeout", type=float, default=2.0)
    ap.add_argument("--kex", default="ML-KEM-512")
    ap.add_argument("--sig", default="ML-DSA-44")
    ap.add_argument("--mtu", type=int, default=1400)
    ap.add_argument("--cert", help="server certificate file")
    ap.add_argument("--key", help="server signing key file")
    ap.add_argument("--cookie-secret", help="file holding the cookie secret shared across proxy instances")
    ap.add_argument("--no-hrr", action="store_true", help="accept CH2 without a prior HRR")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    try:
        hs = HandshakeConfig(
            parse_kex(args.kex), parse_sig(args.sig), VerifyMode.NO_VERIFY, args.mtu, not args.no_hrr
        )
    except ValueError as exc:
        ap.error(str(exc))
    key_store = None
    if args.cert and args.key:
        key_store = certs.load_key_store(args.cert, args.key, args.cookie_secret)
    elif args.cert or args.key:
        ap.error("--cert and --key must be given together")
    else:
        log.warning("no --cert/--key given: secure listener disabled")
    config = ProxyConfig(
        args.host, args.coap_port, args.coaps_port, args.backend_timeout, hs, key_store, args.backend_url
    )
    try:
        server = serve(config)
    except (OSError, ValueError) as exc:
        raise SystemExit(f"startup failed: {exc}")
    log.info("coap on %d, coaps on %s", server.coap_port, server.coaps_port or "disabled")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
