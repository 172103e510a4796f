import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from oracles import coap_header
from qeaas import coap
from qeaas.coap import CoapMessage, MsgType


def test_empty_ack_encoding():
    msg = CoapMessage(MsgType.ACK, coap.EMPTY, 0x1234)
    assert coap.encode(msg) == bytes.fromhex("60001234")
    assert coap.encode(msg) == coap_header(1, 2, 0, 0, 0x1234)


def test_empty_ack_decoding():
    msg = coap.decode(bytes.fromhex("60001234"))
    assert (msg.msg_type, msg.code, msg.message_id, msg.token, msg.options, msg.payload) == (
        MsgType.ACK, coap.EMPTY, 0x1234, b"", [], b"",
    )


def test_proxy_uri_uses_extended_delta():
    uri = b"http://127.0.0.1:6065/random_number/8"
    wire = coap.encode(coap.get_request(uri.decode(), 1, b"", True))
    # header(4) then option byte: delta nibble 13, length nibble 13 (len 37 >= 13)
    assert wire[4] >> 4 == 13
    assert wire[5] == 35 - 13
    assert wire[4] & 0x0F == 13 and wire[6] == len(uri) - 13
    assert wire[7:] == uri


def test_hand_encoded_get_with_token_and_payload():
    msg = CoapMessage(MsgType.CON, coap.GET, 7, b"\xaa\xbb", [(coap.URI_PATH, b"x")], b"hi")
    expected = coap_header(1, 0, 2, 1, 7) + b"\xaa\xbb" + bytes([(11 << 4) | 1]) + b"x" + b"\xffhi"
    assert coap.encode(msg) == expected


def test_options_sorted_on_wire():
    msg = CoapMessage(MsgType.NON, coap.GET, 1, b"", [(35, b"u"), (11, b"a"), (12, b"\x32"), (11, b"b")])
    decoded = coap.decode(coap.encode(msg))
    assert [n for n, _ in decoded.options] == [11, 11, 12, 35]
    assert decoded.options[:2] == [(11, b"a"), (11, b"b")]


def test_two_byte_extension():
    msg = CoapMessage(MsgType.CON, coap.GET, 1, b"", [(2000, b"v" * 300)])
    wire = coap.encode(msg)
    assert wire[4] == (14 << 4) | 14
    assert coap.decode(wire) == msg


@pytest.mark.parametrize(
    "data,err",
    [
        (b"", coap.TruncatedHeader),
        (b"\x40\x01\x00", coap.TruncatedHeader),
        (b"\x80\x01\x00\x01", coap.BadVersion),
        (b"\x49\x01\x00\x01" + b"\x00" * 9, coap.BadTokenLength),
        (b"\x42\x01\x00\x01\xaa", coap.TruncatedToken),
        (b"\x40\x01\x00\x01\xd1", coap.TruncatedOption),
        (b"\x40\x01\x00\x01\x13", coap.TruncatedOption),
        (b"\x40\x01\x00\x01\xf0", coap.ReservedNibble),
        (b"\x40\x01\x00\x01\x1f", coap.ReservedNibble),
        (b"\x40\x01\x00\x01\xff", coap.EmptyPayload),
        (b"\x60\x00\x00\x01\xff\x00", coap.NonEmptyEmptyMessage),
        (b"\x40\x01\x00\x01" + b"\xe0\xff\xff" * 2, coap.OptionNumberOverflow),
    ],
)
def test_malformed_inputs_are_typed(data, err):
    with pytest.raises(err):
        coap.decode(data)


def test_encode_errors():
    with pytest.raises(coap.EncodeError):
        coap.encode(CoapMessage(MsgType.CON, coap.GET, 1, b"x" * 9))
    with pytest.raises(coap.EncodeError):
        coap.encode(CoapMessage(MsgType.ACK, coap.EMPTY, 1, b"t"))
    with pytest.raises(coap.EncodeError):
        coap.get_request("http://h/" + "a" * 1100, 1, b"")


def test_match_response_rules():
    req = coap.get_request("http://h/x", 0x10, b"tok", True)
    ack = CoapMessage(MsgType.ACK, coap.CONTENT, 0x10, b"tok")
    assert coap.match_response(req, ack)
    assert not coap.match_response(req, CoapMessage(MsgType.ACK, coap.CONTENT, 0x10, b"other"))
    assert not coap.match_response(req, CoapMessage(MsgType.ACK, coap.CONTENT, 0x11, b"tok"))
    # separate response: new MID, same token
    assert coap.match_response(req, CoapMessage(MsgType.CON, coap.CONTENT, 0x99, b"tok"))
    assert not coap.match_response(req, CoapMessage(MsgType.RST, coap.EMPTY, 0x10))


def messages():
    option = st.tuples(st.integers(0, 3000), st.binary(max_size=300))
    full = st.builds(
        CoapMessage,
        st.sampled_from(list(MsgType)),
        st.integers(1, 255),
        st.integers(0, 0xFFFF),
        st.binary(max_size=8),
        st.lists(option, max_size=6),
        st.binary(max_size=64),
    )
    empty = st.builds(CoapMessage, st.sampled_from(list(MsgType)), st.just(coap.EMPTY), st.integers(0, 0xFFFF))
    return st.one_of(full, empty)


@settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(messages())
def test_round_trip(msg):
    wire = coap.encode(msg)
    back = coap.decode(wire)
    assert back.options == msg.wire_options()
    assert (back.msg_type, back.code, back.message_id, back.token, back.payload) == (
        msg.msg_type, msg.code, msg.message_id, msg.token, msg.payload,
    )
    assert coap.encode(back) == wire


@settings(max_examples=5_000, deadline=None)
@given(st.binary(max_size=64))
def test_fuzz_decode_only_typed_errors(data):
    try:
        msg = coap.decode(data)
    except coap.MalformedMessage:
        return
    assert coap.encode(msg) == data
