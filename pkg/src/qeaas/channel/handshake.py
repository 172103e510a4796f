"""Sans-IO client and server handshake state machines.

Flights with ``force_hrr`` (the default)::

    client                                   server
    CH1 (no key share)          -------->
                                <--------    HRR (stateless cookie)
    CH2 (cookie, key share)     -------->
                                <--------    SH, CERT, CERT_VERIFY, FINISHED_S
    FINISHED_C [+ app record]   -------->
                                <--------    app record

The transcript hash is SHA-256 over the full message encodings, except that
CH1 is replaced by a synthetic ``message_hash`` entry carrying its hash; the
server recovers that hash from the cookie, so it keeps no state between CH1
and CH2.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass, field

from . import certs, cookie as cookiemod, kex as kexmod, sig as sigmod
from .config import HandshakeConfig, Kex, Sig, VerifyMode
from .messages import (
    COOKIE, KEX, KEY_SHARE, PROTOCOL_VERSION, RANDOM, SIG, SIGNATURE, VERIFY_DATA, VERSION,
    CERTIFICATE, Fragment, HandshakeMessage, MsgType, Reassembler, ReassemblyError,
    fragment, pack_datagrams,
)
from .record import ALERT, APPLICATION, Record, RecordError, Session, parse_datagram
from .schedule import KeyMaterial, finished_mac, key_schedule
from .tlv import TLVError

MESSAGE_HASH = 254

ALERT_CLOSE = 0
ALERT_UNEXPECTED = 10
ALERT_BAD_CERTIFICATE = 42
ALERT_HANDSHAKE_FAILURE = 40
ALERT_DECODE = 50
ALERT_DECRYPT = 51


class HandshakeError(Exception):
    pass


class DecodeError(HandshakeError):
    pass


class ReassemblyFailed(DecodeError):
    pass


class UnexpectedMessage(HandshakeError):
    pass


class AlgorithmMismatch(HandshakeError):
    pass


class CookieRejected(HandshakeError):
    pass


class KeyExchangeFailed(HandshakeError):
    pass


class BadCertificate(HandshakeError):
    pass


class ChainValidationFailed(HandshakeError):
    pass


class BadCertificateVerify(HandshakeError):
    pass


class BadFinished(HandshakeError):
    pass


class AlertReceived(HandshakeError):
    def __init__(self, code: int):
        super().__init__(f"peer sent alert {code}")
        self.code = code


class HandshakeTimeout(HandshakeError):
    pass


class Transcript:
    def __init__(self):
        self._h = hashlib.sha256()

    def add(self, msg: HandshakeMessage) -> None:
        self._h.update(msg.encode())

    def add_ch1_hash(self, ch1_hash: bytes) -> None:
        self._h.update(bytes([MESSAGE_HASH]) + len(ch1_hash).to_bytes(3, "big") + ch1_hash)

    def digest(self) -> bytes:
        return self._h.copy().digest()


def alert_record(code: int) -> bytes:
    return Record(ALERT, 0, 0, bytes([code])).encode()


def _fields(msg: HandshakeMessage) -> dict[int, bytes]:
    try:
        f = msg.fields()
    except TLVError as exc:
        raise DecodeError(f"{msg.msg_type.name}: {exc}") from exc
    if VERSION in f and f[VERSION] != PROTOCOL_VERSION:
        raise DecodeError(f"{msg.msg_type.name}: unsupported version {f[VERSION].hex()}")
    return f


def _alg_byte(value: bytes, enum):
    if len(value) != 1:
        raise DecodeError("algorithm field must be one byte")
    try:
        return enum(value[0])
    except ValueError:
        raise DecodeError(f"unknown {enum.__name__} id {value[0]}") from None


def hello_retry(cookie: bytes, config: HandshakeConfig) -> HandshakeMessage:
    return HandshakeMessage.build(MsgType.HRR, {
        VERSION: PROTOCOL_VERSION, COOKIE: cookie,
        KEX: bytes([config.kex.value]), SIG: bytes([config.sig.value]),
    })


class _Inbox:
    def __init__(self):
        self.parts: dict[int, Reassembler] = {}

    def add(self, frag: Fragment) -> None:
        r = self.parts.get(frag.msg_type)
        if r is None:
            r = self.parts[frag.msg_type] = Reassembler(frag.msg_type, frag.total_length)
        try:
            r.add(frag)
        except ReassemblyError as exc:
            raise ReassemblyFailed(str(exc)) from exc

    def ready(self, *types: MsgType) -> bool:
        return all(t in self.parts and self.parts[t].complete for t in types)

    def take(self, t: MsgType) -> HandshakeMessage:
        return self.parts.pop(t).message()


def _parse(datagram: bytes) -> list[Record]:
    try:
        return parse_datagram(datagram)
    except RecordError as exc:
        raise DecodeError(str(exc)) from exc


def _fragment_of(rec: Record) -> Fragment:
    try:
        return Fragment.decode(rec.body)
    except ReassemblyError as exc:
        raise ReassemblyFailed(str(exc)) from exc


# -- client ------------------------------------------------------------------

class ClientHandshake:
    """Client side. Call :meth:`start`, feed every inbound datagram to
    :meth:`handle`, and once ``state == "established"`` call :meth:`finish`
    to emit the final flight (optionally carrying the first request)."""

    SERVER_FLIGHT = (MsgType.SH, MsgType.CERT, MsgType.CERT_VERIFY, MsgType.FINISHED_S)

    def __init__(self, config: HandshakeConfig, trust_anchor: certs.Certificate | None = None):
        if config.verify_mode is VerifyMode.FULL_CHAIN and trust_anchor is None:
            raise ValueError("full-chain verification needs a trust anchor")
        self.config = config
        self.trust_anchor = trust_anchor
        self.state = "start"
        self.flights_sent = 0
        self.last_flight: list[bytes] = []
        self.session: Session | None = None
        self.server_certificate: certs.Certificate | None = None
        self.ignored_datagrams = 0
        self._inbox = _Inbox()
        self._transcript = Transcript()
        self._random = b""
        self._kex_state = None
        self._keys: KeyMaterial | None = None

    def _send(self, msgs: list[HandshakeMessage], extra: list[bytes] = ()) -> list[bytes]:
        records = [r for m in msgs for r in fragment(m, self.config.mtu_bytes)] + list(extra)
        self.last_flight = pack_datagrams(records, self.config.mtu_bytes)
        self.flights_sent += 1
        return list(self.last_flight)

    def _alg_fields(self) -> dict[int, bytes]:
        return {KEX: bytes([self.config.kex.value]), SIG: bytes([self.config.sig.value])}

    def start(self) -> list[bytes]:
        if self.state != "start":
            raise HandshakeError("handshake already started")
        self._random = os.urandom(32)
        if self.config.force_hrr:
            ch1 = HandshakeMessage.build(
                MsgType.CH1, {VERSION: PROTOCOL_VERSION, RANDOM: self._random, **self._alg_fields()}
            )
            self._ch1_hash = hashlib.sha256(ch1.encode()).digest()
            self.state = "wait_hrr"
            return self._send([ch1])
        return self._send_ch2(b"")

    def _send_ch2(self, cookie: bytes) -> list[bytes]:
        share, self._kex_state = kexmod.client_share(self.config.kex)
        ch2 = HandshakeMessage.build(MsgType.CH2, {
            VERSION: PROTOCOL_VERSION, RANDOM: self._random, **self._alg_fields(),
            COOKIE: cookie, KEY_SHARE: share,
        })
        self._transcript.add(ch2)
        self.state = "wait_server"
        return self._send([ch2])

    def handle(self, datagram: bytes) -> list[bytes]:
        if self.state in ("failed", "start"):
            raise HandshakeError(f"cannot handle datagrams in state {self.state}")
        try:
            for rec in _parse(datagram):
                if rec.content_type == ALERT:
                    raise AlertReceived(rec.body[0] if rec.body else -1)
                if rec.content_type == APPLICATION:
                    raise UnexpectedMessage("application data before the handshake finished")
                self._accept(_fragment_of(rec))
            return self._progress()
        except HandshakeError:
            self.state = "failed"
            raise

    def _accept(self, frag: Fragment) -> None:
        expected = {"wait_hrr": (MsgType.HRR,), "wait_server": self.SERVER_FLIGHT}.get(self.state, ())
        if frag.msg_type == MsgType.HRR and self.state == "wait_server":
            if self._stale_hrr(frag):
                self.ignored_datagrams += 1
                return
            raise CookieRejected("server answered the second ClientHello with another HelloRetryRequest")
        if frag.msg_type not in expected:
            raise UnexpectedMessage(f"{MsgType(frag.msg_type).name} in state {self.state}")
        self._inbox.add(frag)

    def _stale_hrr(self, frag: Fragment) -> bool:
        # A retransmitted CH1 earns a second HRR whose cookie still names our
        # CH1; a rejected cookie comes back naming CH2 instead.
        if not self.config.force_hrr or frag.offset != 0 or len(frag.data) != frag.total_length:
            return False
        try:
            f = HandshakeMessage(MsgType.HRR, frag.data).fields()
        except TLVError:
            return False
        return f[COOKIE][:32] == self._ch1_hash

    def _progress(self) -> list[bytes]:
        if self.state == "wait_hrr" and self._inbox.ready(MsgType.HRR):
            return self._on_hrr(self._inbox.take(MsgType.HRR))
        if self.state == "wait_server" and self._inbox.ready(*self.SERVER_FLIGHT):
            self._on_server_flight()
        return []

    def _check_algs(self, f: dict[int, bytes]) -> None:
        if _alg_byte(f[KEX], Kex) is not self.config.kex or _alg_byte(f[SIG], Sig) is not self.config.sig:
            raise AlgorithmMismatch("server selected different algorithms")

    def _on_hrr(self, hrr: HandshakeMessage) -> list[bytes]:
        f = _fields(hrr)
        self._check_algs(f)
        self._transcript.add_ch1_hash(self._ch1_hash)
        self._transcript.add(hrr)
        return self._send_ch2(f[COOKIE])

    def _on_server_flight(self) -> None:
        t = self._transcript
        sh = self._inbox.take(MsgType.SH)
        f = _fields(sh)
        try:
            secret = kexmod.client_finish(self.config.kex, self._kex_state, f[KEY_SHARE])
        except kexmod.KeyExchangeError as exc:
            raise KeyExchangeFailed(str(exc)) from exc
        t.add(sh)
        keys = key_schedule(secret, t.digest())

        cert_msg = self._inbox.take(MsgType.CERT)
        try:
            cert = certs.Certificate.decode(_fields(cert_msg)[CERTIFICATE])
        except certs.CertificateError as exc:
            raise BadCertificate(str(exc)) from exc
        if cert.public_key.alg is not self.config.sig:
            raise BadCertificate("certificate key does not match the configured signature algorithm")
        t.add(cert_msg)
        if self.config.verify_mode is VerifyMode.FULL_CHAIN:
            try:
                certs.validate_chain(cert, self.trust_anchor)
            except certs.ChainInvalid as exc:
                raise ChainValidationFailed(str(exc)) from exc

        cv = self._inbox.take(MsgType.CERT_VERIFY)
        f = _fields(cv)
        if _alg_byte(f[SIG], Sig) is not self.config.sig:
            raise BadCertificateVerify("CertificateVerify uses an unexpected algorithm")
        if not sigmod.verify_transcript(cert.public_key, t.digest(), f[SIGNATURE]):
            raise BadCertificateVerify("CertificateVerify signature does not verify")
        t.add(cv)

        fin = self._inbox.take(MsgType.FINISHED_S)
        expected = finished_mac(keys.server_finished, t.digest())
        if not hmac.compare_digest(_fields(fin)[VERIFY_DATA], expected):
            raise BadFinished("server Finished MAC mismatch")
        t.add(fin)

        self._keys = keys
        self.server_certificate = cert
        self.session = Session("client", keys, t.digest(), self.config, cert.subject)
        self.state = "established"

    def finish(self, first_app: bytes | None = None) -> list[bytes]:
        if self.state != "established":
            raise HandshakeError(f"finish() in state {self.state}")
        t = self._transcript
        fin = HandshakeMessage.build(
            MsgType.FINISHED_C, {VERIFY_DATA: finished_mac(self._keys.client_finished, t.digest())}
        )
        t.add(fin)
        self.session.transcript_hash = t.digest()
        extra = [self.session.seal(first_app)] if first_app is not None else []
        self.state = "done"
        return self._send([fin], extra)


# -- server ------------------------------------------------------------------

@dataclass
class _Pending:
    transcript: Transcript
    keys: KeyMaterial
    flight: list[bytes]
    ch2: bytes
    created: float


@dataclass
class ServerOutput:
    out: list[bytes] = field(default_factory=list)
    app: list[bytes] = field(default_factory=list)


class ChannelServer:
    """Server side for any number of peers, keyed by address.

    ``handle`` never raises on bad input: malformed datagrams are dropped
    and counted in ``stats``; protocol failures produce an alert.
    """

    def __init__(self, config: HandshakeConfig, key_store: certs.KeyStore, clock=time.time):
        if key_store.signing_key.alg is not config.sig:
            raise ValueError(
                f"key store holds a {key_store.signing_key.alg.name} key but the config wants {config.sig.name}"
            )
        self.config = config
        self.key_store = key_store
        self.clock = clock
        self.pending: dict[tuple, _Pending] = {}
        self.sessions: dict[tuple, Session] = {}
        self.stats: Counter = Counter()
        self._inbox: dict[tuple, _Inbox] = {}
        self._lock = threading.RLock()

    def handle(self, datagram: bytes, addr: tuple) -> ServerOutput:
        result = ServerOutput()
        with self._lock:
            try:
                records = parse_datagram(datagram)
            except RecordError:
                self.stats["decode_errors"] += 1
                return result
            for rec in records:
                if rec.content_type == APPLICATION:
                    self._on_app(rec, addr, result)
                elif rec.content_type == ALERT:
                    self.stats["alerts_received"] += 1
                    self.pending.pop(addr, None)
                    self.sessions.pop(addr, None)
                else:
                    self._on_handshake(rec, addr, result)
        return result

    def _on_app(self, rec: Record, addr, result: ServerOutput) -> None:
        session = self.sessions.get(addr)
        if session is None:
            self.stats["app_without_session"] += 1
            return
        try:
            result.app.append(session.open(rec))
        except RecordError:
            self.stats["bad_records"] += 1

    def _on_handshake(self, rec: Record, addr, result: ServerOutput) -> None:
        try:
            frag = Fragment.decode(rec.body)
        except ReassemblyError:
            self.stats["decode_errors"] += 1
            return
        if frag.msg_type == MsgType.CH1:
            # never buffer CH1: the server stays stateless until a valid cookie returns
            if frag.offset != 0 or len(frag.data) != frag.total_length:
                self.stats["fragmented_ch1"] += 1
                return
            result.out += self._on_ch1(HandshakeMessage(MsgType.CH1, frag.data), addr)
            return
        if frag.msg_type not in (MsgType.CH2, MsgType.FINISHED_C):
            self.stats["unexpected"] += 1
            return
        inbox = self._inbox.setdefault(addr, _Inbox())
        try:
            inbox.add(frag)
        except ReassemblyFailed:
            self.stats["decode_errors"] += 1
            self._inbox.pop(addr, None)
            return
        if not inbox.ready(MsgType(frag.msg_type)):
            return
        msg = inbox.take(MsgType(frag.msg_type))
        if not inbox.parts:
            self._inbox.pop(addr, None)
        if msg.msg_type == MsgType.CH2:
            result.out += self._on_ch2(msg, addr)
        else:
            result.out += self._on_finished(msg, addr)

    def _datagrams(self, msgs: list[HandshakeMessage]) -> list[bytes]:
        records = [r for m in msgs for r in fragment(m, self.config.mtu_bytes)]
        return pack_datagrams(records, self.config.mtu_bytes)

    def _retry(self, hello: HandshakeMessage, addr) -> list[bytes]:
        ch_hash = hashlib.sha256(hello.encode()).digest()
        c = cookiemod.mint(self.key_store.cookie_secret, addr, ch_hash, self.clock())
        self.stats["hrr_sent"] += 1
        return self._datagrams([hello_retry(c.encode(), self.config)])

    def _algs_ok(self, f: dict[int, bytes]) -> bool:
        try:
            return _alg_byte(f[KEX], Kex) is self.config.kex and _alg_byte(f[SIG], Sig) is self.config.sig
        except DecodeError:
            return False

    def _on_ch1(self, ch1: HandshakeMessage, addr) -> list[bytes]:
        try:
            f = _fields(ch1)
        except DecodeError:
            self.stats["decode_errors"] += 1
            return []
        if len(f[RANDOM]) != 32:
            self.stats["decode_errors"] += 1
            return []
        if not self._algs_ok(f):
            self.stats["algorithm_mismatch"] += 1
            return [alert_record(ALERT_HANDSHAKE_FAILURE)]
        return self._retry(ch1, addr)

    def _expire(self) -> None:
        now = self.clock()
        for a in [a for a, p in self.pending.items() if now - p.created > cookiemod.COOKIE_LIFETIME]:
            del self.pending[a]

    def _on_ch2(self, ch2: HandshakeMessage, addr) -> list[bytes]:
        self._expire()
        prior = self.pending.get(addr)
        if prior is not None and prior.ch2 == ch2.body:
            self.stats["flight_retransmits"] += 1
            return list(prior.flight)
        try:
            f = _fields(ch2)
        except DecodeError:
            self.stats["decode_errors"] += 1
            return []
        if len(f[RANDOM]) != 32:
            self.stats["decode_errors"] += 1
            return []
        if not self._algs_ok(f):
            self.stats["algorithm_mismatch"] += 1
            return [alert_record(ALERT_HANDSHAKE_FAILURE)]

        transcript = Transcript()
        if f[COOKIE] or self.config.force_hrr:
            try:
                c = cookiemod.Cookie.decode(f[COOKIE])
                cookiemod.check(self.key_store.cookie_secret, addr, c, self.clock())
            except cookiemod.CookieError:
                self.stats["cookie_rejected"] += 1
                return self._retry(ch2, addr)
            transcript.add_ch1_hash(c.ch1_hash)
            transcript.add(hello_retry(f[COOKIE], self.config))
        transcript.add(ch2)

        try:
            share, secret = kexmod.server_exchange(self.config.kex, f[KEY_SHARE])
        except kexmod.KeyExchangeError:
            self.stats["kex_failures"] += 1
            return [alert_record(ALERT_HANDSHAKE_FAILURE)]
        sh = HandshakeMessage.build(MsgType.SH, {
            VERSION: PROTOCOL_VERSION, RANDOM: os.urandom(32), KEY_SHARE: share,
        })
        transcript.add(sh)
        keys = key_schedule(secret, transcript.digest())
        cert = HandshakeMessage.build(MsgType.CERT, {CERTIFICATE: self.key_store.certificate.encode()})
        transcript.add(cert)
        signature = sigmod.sign_transcript(self.key_store.signing_key, transcript.digest())
        cv = HandshakeMessage.build(
            MsgType.CERT_VERIFY, {SIG: bytes([self.config.sig.value]), SIGNATURE: signature}
        )
        transcript.add(cv)
        fin = HandshakeMessage.build(
            MsgType.FINISHED_S, {VERIFY_DATA: finished_mac(keys.server_finished, transcript.digest())}
        )
        transcript.add(fin)
        flight = self._datagrams([sh, cert, cv, fin])
        self.pending[addr] = _Pending(transcript, keys, flight, ch2.body, self.clock())
        self.stats["server_flights"] += 1
        return list(flight)

    def _on_finished(self, fin: HandshakeMessage, addr) -> list[bytes]:
        pending = self.pending.get(addr)
        if pending is None:
            self.stats["unexpected"] += 1
            return []
        try:
            verify_data = _fields(fin)[VERIFY_DATA]
        except DecodeError:
            verify_data = b""
        expected = finished_mac(pending.keys.client_finished, pending.transcript.digest())
        del self.pending[addr]
        if not hmac.compare_digest(verify_data, expected):
            self.stats["bad_finished"] += 1
            return [alert_record(ALERT_DECRYPT)]
        pending.transcript.add(fin)
        self.sessions[addr] = Session(
            "server", pending.keys, pending.transcript.digest(), self.config, f"{addr[0]}:{addr[1]}"
        )
        self.stats["handshakes"] += 1
        return []

    def close_session(self, addr) -> None:
        with self._lock:
            self.sessions.pop(addr, None)
            self.pending.pop(addr, None)
