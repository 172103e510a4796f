"""Record framing and the AES-128-GCM protected record layer.

Every datagram is a concatenation of records::

    content_type (u8) || epoch (u16) || sequence (u48) || length (u16) || body

Handshake and alert records travel in epoch 0 with sequence 0 (the
handshake is protected by its transcript, not by the record layer).
Application records use epoch 1; their header is the AEAD additional
data and the nonce is ``iv XOR (0^48 || sequence)``.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .config import HandshakeConfig
from .schedule import KeyMaterial

ALERT = 21
HANDSHAKE = 22
APPLICATION = 23
CONTENT_TYPES = (ALERT, HANDSHAKE, APPLICATION)

HEADER = struct.Struct("!BH6sH")
HEADER_SIZE = HEADER.size
TAG_SIZE = 16
SEQ_LIMIT = 1 << 48
WINDOW = 64
APP_EPOCH = 1


class RecordError(ValueError):
    pass


class AuthenticationFailure(RecordError):
    pass


class ReplayDetected(RecordError):
    pass


class SequenceOverflow(RecordError):
    pass


@dataclass(frozen=True)
class Record:
    content_type: int
    epoch: int
    seq: int
    body: bytes

    def header(self) -> bytes:
        return HEADER.pack(self.content_type, self.epoch, self.seq.to_bytes(6, "big"), len(self.body))

    def encode(self) -> bytes:
        return self.header() + self.body


def parse_datagram(data: bytes) -> list[Record]:
    records = []
    pos = 0
    while pos < len(data):
        if pos + HEADER_SIZE > len(data):
            raise RecordError("truncated record header")
        ctype, epoch, seq, length = HEADER.unpack_from(data, pos)
        pos += HEADER_SIZE
        if ctype not in CONTENT_TYPES:
            raise RecordError(f"unknown content type {ctype}")
        if pos + length > len(data):
            raise RecordError("record body overruns datagram")
        seqno = int.from_bytes(seq, "big")
        if ctype != APPLICATION and (epoch != 0 or seqno != 0):
            raise RecordError("plaintext records must use epoch 0, sequence 0")
        if ctype == APPLICATION and epoch != APP_EPOCH:
            raise RecordError(f"application record in epoch {epoch}")
        records.append(Record(ctype, epoch, seqno, data[pos : pos + length]))
        pos += length
    if not records:
        raise RecordError("empty datagram")
    return records


def nonce(iv: bytes, seq: int) -> bytes:
    padded = seq.to_bytes(len(iv), "big")
    return bytes(a ^ b for a, b in zip(iv, padded))


class ReplayWindow:
    """Sliding anti-replay window over 48-bit sequence numbers."""

    def __init__(self, size: int = WINDOW):
        self.size = size
        self.top = -1
        self.bitmap = 0

    def seen(self, seq: int) -> bool:
        if seq > self.top:
            return False
        offset = self.top - seq
        if offset >= self.size:
            return True
        return bool(self.bitmap >> offset & 1)

    def accept(self, seq: int) -> None:
        if seq > self.top:
            shift = seq - self.top
            self.bitmap = ((self.bitmap << shift) | 1) & ((1 << self.size) - 1)
            self.top = seq
        else:
            self.bitmap |= 1 << (self.top - seq)


@dataclass
class Session:
    """An established channel; ``role`` selects which key seals outbound data."""

    role: str
    keys: KeyMaterial
    transcript_hash: bytes
    config: HandshakeConfig
    peer_identity: str
    send_seq: int = 0
    window: ReplayWindow = field(default_factory=ReplayWindow)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def _direction_keys(self, sending: bool) -> tuple[bytes, bytes]:
        client_side = (self.role == "client") == sending
        if client_side:
            return self.keys.client_key, self.keys.client_iv
        return self.keys.server_key, self.keys.server_iv

    def seal(self, plaintext: bytes) -> bytes:
        key, iv = self._direction_keys(sending=True)
        with self._lock:
            if self.send_seq >= SEQ_LIMIT:
                raise SequenceOverflow("send sequence space exhausted")
            seq = self.send_seq
            self.send_seq += 1
        header = HEADER.pack(APPLICATION, APP_EPOCH, seq.to_bytes(6, "big"), len(plaintext) + TAG_SIZE)
        return header + AESGCM(key).encrypt(nonce(iv, seq), plaintext, header)

    def open(self, record: Record | bytes) -> bytes:
        if isinstance(record, (bytes, bytearray)):
            parsed = parse_datagram(bytes(record))
            if len(parsed) != 1:
                raise RecordError("expected exactly one record")
            record = parsed[0]
        if record.content_type != APPLICATION:
            raise RecordError("not an application record")
        key, iv = self._direction_keys(sending=False)
        with self._lock:
            if self.window.seen(record.seq):
                raise ReplayDetected(f"sequence {record.seq} already seen or too old")
            try:
                plaintext = AESGCM(key).decrypt(nonce(iv, record.seq), record.body, record.header())
            except InvalidTag:
                raise AuthenticationFailure("record failed authentication") from None
            self.window.accept(record.seq)
        return plaintext

    def key_material(self) -> bytes:
        k = self.keys
        return k.client_key + k.server_key + k.client_iv + k.server_iv + k.client_finished + k.server_finished


def seal_record(session: Session, plaintext: bytes) -> bytes:
    return session.seal(plaintext)


def open_record(session: Session, record: bytes) -> bytes:
    return session.open(record)
