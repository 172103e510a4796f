"""HTTP entropy backend: ``GET /random_number/{num_bytes}``.

Response body::

    {"random_bytes": "<lowercase hex>", "num_bytes": N, "source": "<mode>"}

Modes: ``direct`` reads a simulated QRNG stream file sequentially, ``mixed``
reads operating-system randomness, ``test`` replays a seeded stream.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .sources import EntropySource, SourceError, StreamExhausted, make_source

DEFAULT_PORT = 6065
MIN_BYTES, MAX_BYTES = 1, 256
MODES = ("direct", "mixed", "test")
ROUTE = re.compile(r"^/random_number/([^/?#]*)$")

log = logging.getLogger("qeaas.service")


@dataclass(frozen=True)
class EntropyResponse:
    random_bytes: str
    num_bytes: int
    source: str

    def __post_init__(self):
        if len(self.random_bytes) != 2 * self.num_bytes:
            raise ValueError("hex length must be twice num_bytes")

    def to_json(self) -> bytes:
        return json.dumps(
            {"random_bytes": self.random_bytes, "num_bytes": self.num_bytes, "source": self.source}
        ).encode()

    @classmethod
    def from_json(cls, body: bytes | str) -> "EntropyResponse":
        obj = json.loads(body)
        if not isinstance(obj, dict):
            raise ValueError("response is not a JSON object")
        hex_text = obj["random_bytes"]
        if not isinstance(hex_text, str) or hex_text != hex_text.lower():
            raise ValueError("random_bytes must be lowercase hex text")
        bytes.fromhex(hex_text)
        return cls(hex_text, int(obj["num_bytes"]), str(obj["source"]))

    @property
    def data(self) -> bytes:
        return bytes.fromhex(self.random_bytes)


class EntropyBackend:
    """Mode plus source; reads are serialized so stream slices never overlap."""

    def __init__(self, mode: str, source: EntropySource):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.mode = mode
        self.source = source
        self._lock = threading.Lock()

    @classmethod
    def create(cls, mode: str, seed: int = 0, stream_file: str | None = None) -> "EntropyBackend":
        return cls(mode, make_source(mode, seed=seed, stream_file=stream_file))

    def read_source(self, n: int) -> bytes:
        if not MIN_BYTES <= n <= MAX_BYTES:
            raise ValueError(f"num_bytes must be in {MIN_BYTES}..{MAX_BYTES}")
        with self._lock:
            return self.source.read(n)


def read_source(backend: EntropyBackend, n: int) -> bytes:
    return backend.read_source(n)


def handle_http(backend: EntropyBackend, method: str, path: str) -> tuple[int, bytes]:
    """Map a request line to ``(status, JSON body)``; independent of the socket layer."""
    m = ROUTE.match(path)
    if m is None:
        return 404, _error("not found")
    if method != "GET":
        return 405, _error("only GET is supported")
    text = m.group(1)
    if not text.isascii() or not text.isdigit():
        return 400, _error("num_bytes must be an integer")
    n = int(text)
    if not MIN_BYTES <= n <= MAX_BYTES:
        return 400, _error(f"num_bytes must be in {MIN_BYTES}..{MAX_BYTES}")
    try:
        data = backend.read_source(n)
    except StreamExhausted:
        return 503, _error("entropy stream exhausted")
    except SourceError as exc:
        return 503, _error(str(exc))
    return 200, EntropyResponse(data.hex(), n, backend.mode).to_json()


def _error(msg: str) -> bytes:
    return json.dumps({"error": msg}).encode()


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "EntropyServer"

    def _respond(self) -> None:
        status, body = handle_http(self.server.backend, self.command, self.path)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        if status == 405:
            self.send_header("Allow", "GET")
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(body)

    do_GET = do_POST = do_PUT = do_DELETE = do_PATCH = do_HEAD = _respond

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)


class EntropyServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], backend: EntropyBackend):
        super().__init__(address, _Handler)
        self.backend = backend

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="entropy-service", daemon=True)
        t.start()
        return t

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description="Entropy HTTP backend")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=DEFAULT_PORT)
    ap.add_argument("--mode", choices=MODES, default="mixed")
    ap.add_argument("--stream-file", help="byte stream for direct mode")
    ap.add_argument("--seed", type=int, default=0, help="seed for test mode")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    try:
        backend = EntropyBackend.create(args.mode, args.seed, args.stream_file)
    except ValueError as exc:
        ap.error(str(exc))
    server = EntropyServer((args.host, args.port), backend)
    log.info("serving /random_number/{n} on %s:%d (mode %s)", args.host, server.port, args.mode)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


if __name__ == "__main__":
    main()
