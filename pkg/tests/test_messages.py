import os
import random

import pytest
from hypothesis import given, settings, strategies as st

from qeaas.channel import messages as m, tlv
from qeaas.channel.record import HEADER_SIZE


def _msg(n, t=m.MsgType.CERT):
    return m.HandshakeMessage(t, os.urandom(n))


def test_3732_bytes_at_mtu_1400_is_three_fragments():
    msg = _msg(3732)
    recs = m.fragment(msg, 1400)
    assert len(recs) == 3 == m.frag_count(3732, 1400)
    assert all(len(r) <= 1400 for r in recs)
    assert m.reassemble(recs) == msg


def test_fragment_header_fields():
    recs = m.fragment(_msg(3000), 1400)
    frag = m.Fragment.decode(recs[1][HEADER_SIZE:])
    assert (frag.msg_type, frag.total_length, frag.offset, len(frag.data)) == (5, 3000, 1379, 1379)


def test_reverse_order_and_duplicates():
    msg = _msg(5000)
    recs = m.fragment(msg, 1400)
    assert m.reassemble(list(reversed(recs))) == msg
    assert m.reassemble(recs + recs[:2]) == msg


@settings(max_examples=50)
@given(n=st.integers(0, 9000), mtu=st.integers(512, 1500), seed=st.integers(0, 1000))
def test_shuffled_reassembly(n, mtu, seed):
    msg = m.HandshakeMessage(m.MsgType.CERT, random.Random(seed).randbytes(n))
    recs = m.fragment(msg, mtu)
    assert len(recs) == m.frag_count(n, mtu)
    assert all(len(r) <= mtu for r in recs)
    random.Random(seed).shuffle(recs)
    assert m.reassemble(recs) == msg


def test_inconsistent_total_rejected():
    a = m.Fragment(5, 100, 0, b"x" * 50)
    b = m.Fragment(5, 120, 50, b"y" * 50)
    with pytest.raises(m.ReassemblyError):
        m.reassemble([a, b])


def test_conflicting_overlap_rejected():
    a = m.Fragment(5, 10, 0, b"a" * 6)
    b = m.Fragment(5, 10, 4, b"b" * 6)
    with pytest.raises(m.ReassemblyError):
        m.reassemble([a, b])


def test_missing_fragment_is_incomplete():
    recs = m.fragment(_msg(3000), 1400)
    with pytest.raises(m.ReassemblyError):
        m.reassemble(recs[:2])


@pytest.mark.parametrize(
    "body",
    [
        b"\x05\x00\x00",
        b"\x63" + bytes(9),
        b"\x05\x00\x00\x0a\x00\x00\x00\x00\x00\x05abc",
        b"\x05\x00\x00\x02\x00\x00\x00\x00\x00\x03abc",
        b"\x05\xff\xff\xff\x00\x00\x00\x00\x00\x01a",
    ],
)
def test_bad_fragment_headers(body):
    with pytest.raises(m.ReassemblyError):
        m.Fragment.decode(body)


def test_mldsa_certificate_flight_fragments():
    # an ML-DSA-44 certificate: 1313-byte key + 2420-byte issuer signature
    cert_len = 4 + 3 * 6 + 1 + len("qeaas-proxy") + len("qeaas-ca") + 1 + 1313 + 2420
    msg = m.HandshakeMessage.build(m.MsgType.CERT, {m.CERTIFICATE: bytes(cert_len)})
    assert len(m.fragment(msg, 1400)) == 3
    cv = m.HandshakeMessage.build(m.MsgType.CERT_VERIFY, {m.SIG: b"\x01", m.SIGNATURE: bytes(2420)})
    assert len(m.fragment(cv, 1400)) == 2


def test_build_and_fields_round_trip():
    fields = {m.VERSION: m.PROTOCOL_VERSION, m.RANDOM: os.urandom(32), m.KEX: b"\x01", m.SIG: b"\x02"}
    msg = m.HandshakeMessage.build(m.MsgType.CH1, fields)
    assert msg.fields() == fields
    assert msg.encode()[:4] == b"\x01" + len(msg.body).to_bytes(3, "big")


def test_pack_datagrams_respects_mtu():
    recs = [bytes(400)] * 5
    grams = m.pack_datagrams(recs, 1000)
    assert [len(g) for g in grams] == [800, 800, 400]
    with pytest.raises(ValueError):
        m.pack_datagrams([bytes(1001)], 1000)


def test_tlv_strictness():
    data = tlv.encode([(1, b"a"), (2, b"bc")])
    assert tlv.decode(data, [1, 2]) == [b"a", b"bc"]
    with pytest.raises(tlv.TLVError):
        tlv.decode(data + b"\x00", [1, 2])
    with pytest.raises(tlv.TLVError):
        tlv.decode(data, [2, 1])
    with pytest.raises(tlv.TLVError):
        tlv.decode(data[:-1], [1, 2])
    with pytest.raises(tlv.TLVError):
        tlv.encode([(1, bytes(0x10000))])
