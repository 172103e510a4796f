"""Blocking UDP drivers for the sans-IO handshake machines.

Flight retransmission uses a fixed 1 s timer with at most 4 retries.
"""

from __future__ import annotations

import socket
import time
from dataclasses import dataclass, field

from . import certs
from .config import HandshakeConfig
from .handshake import (
    ALERT_CLOSE, ChannelServer, ClientHandshake, HandshakeTimeout, alert_record,
)
from .record import APPLICATION, HANDSHAKE, RecordError, Session, parse_datagram

FLIGHT_TIMEOUT = 1.0
MAX_RETRIES = 4
RECV_BUFFER = 65535


class MTUViolation(AssertionError):
    pass


@dataclass
class UDPTransport:
    """A connected UDP socket that refuses to send datagrams above ``mtu``."""

    peer: tuple[str, int]
    mtu: int = 1400
    sock: socket.socket = field(default=None)
    sent: int = 0
    largest: int = 0

    def __post_init__(self):
        if self.sock is None:
            family = socket.AF_INET6 if ":" in self.peer[0] else socket.AF_INET
            self.sock = socket.socket(family, socket.SOCK_DGRAM)
            self.sock.connect(self.peer)

    def send(self, datagram: bytes) -> None:
        if len(datagram) > self.mtu:
            raise MTUViolation(f"datagram of {len(datagram)} bytes exceeds mtu {self.mtu}")
        self.sock.send(datagram)
        self.sent += 1
        self.largest = max(self.largest, len(datagram))

    def recv(self, timeout: float) -> bytes:
        """Raise ``TimeoutError`` if nothing arrives within ``timeout`` seconds."""
        self.sock.settimeout(max(timeout, 1e-4))
        try:
            return self.sock.recv(RECV_BUFFER)
        except socket.timeout:
            raise TimeoutError from None
        except ConnectionRefusedError:
            # ICMP port unreachable from an earlier send; treat as silence
            raise TimeoutError from None

    def close(self) -> None:
        self.sock.close()


def _drive(transport, datagrams: list[bytes]) -> None:
    for d in datagrams:
        transport.send(d)


def client_handshake(
    transport,
    config: HandshakeConfig,
    trust_anchor: certs.Certificate | None = None,
    first_app: bytes | None = None,
    timeout: float = FLIGHT_TIMEOUT,
    retries: int = MAX_RETRIES,
) -> "SecureChannel":
    """Run the client handshake over ``transport`` and send the final flight.

    ``first_app`` rides in the same datagram flight as FINISHED_C, so the
    caller's first response completes the third round trip.
    """
    hs = ClientHandshake(config, trust_anchor)
    _drive(transport, hs.start())
    attempts = 0
    flights = hs.flights_sent
    deadline = time.monotonic() + timeout
    while hs.state != "established":
        try:
            datagram = transport.recv(deadline - time.monotonic())
        except TimeoutError:
            attempts += 1
            if attempts > retries:
                raise HandshakeTimeout(f"no answer to flight {hs.flights_sent} after {retries} retries")
            _drive(transport, hs.last_flight)
            deadline = time.monotonic() + timeout
            continue
        _drive(transport, hs.handle(datagram))
        if hs.flights_sent != flights:
            flights = hs.flights_sent
            attempts = 0
            deadline = time.monotonic() + timeout
    _drive(transport, hs.finish(first_app))
    return SecureChannel(transport, hs.session, hs.last_flight, hs.flights_sent)


class SecureChannel:
    """Application-data view of an established session."""

    def __init__(self, transport, session: Session, final_flight: list[bytes], flights: int):
        self.transport = transport
        self.session = session
        self.final_flight = final_flight
        self.client_flights = flights
        self.dropped = 0

    def send(self, plaintext: bytes) -> None:
        self.transport.send(self.session.seal(plaintext))

    def recv(self, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        while True:
            datagram = self.transport.recv(deadline - time.monotonic())
            try:
                records = parse_datagram(datagram)
            except RecordError:
                self.dropped += 1
                continue
            for rec in records:
                if rec.content_type == HANDSHAKE:
                    # the server retransmitted its flight, so our FINISHED_C was lost
                    for d in self.final_flight:
                        self.transport.send(d)
                    break
                if rec.content_type != APPLICATION:
                    continue
                try:
                    return self.session.open(rec)
                except RecordError:
                    self.dropped += 1

    def close(self) -> None:
        try:
            self.transport.send(alert_record(ALERT_CLOSE))
        except OSError:
            pass
        self.transport.close()


def server_handshake(
    sock: socket.socket,
    config: HandshakeConfig,
    key_store: certs.KeyStore,
    timeout: float = FLIGHT_TIMEOUT * (MAX_RETRIES + 1),
) -> tuple[Session, tuple, list[bytes]]:
    """Serve a single peer on ``sock`` until its handshake completes.

    Returns the session, the peer address and any application plaintexts
    that arrived with FINISHED_C.
    """
    server = ChannelServer(config, key_store)
    deadline = time.monotonic() + timeout
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise HandshakeTimeout("no client completed the handshake")
        sock.settimeout(remaining)
        try:
            datagram, addr = sock.recvfrom(RECV_BUFFER)
        except socket.timeout:
            continue
        result = server.handle(datagram, addr)
        for d in result.out:
            if len(d) > config.mtu_bytes:
                raise MTUViolation(f"datagram of {len(d)} bytes exceeds mtu")
            sock.sendto(d, addr)
        if addr in server.sessions:
            return server.sessions[addr], addr, result.app
