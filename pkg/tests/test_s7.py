import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icstrace.errors import (
    BadMagic,
    BadVersion,
    EmptyParameters,
    TruncatedFrame,
    TruncatedPdu,
    UnsupportedFunction,
)
from icstrace.s7 import (
    FUNCTION_NAMES,
    SUBFUNCTION_NAMES,
    UNKNOWN,
    CotpType,
    FunctionToken,
    ParamToken,
    S7Pdu,
    classify_payload,
    connection_request,
    extract_function_token,
    extract_parameter_tokens,
    function_name,
    parse_cotp,
    parse_s7,
    parse_tpkt,
    parse_tpkt_stream,
    serialize_request,
)

from .grammar import random_request


def h(text: str) -> bytes:
    return bytes.fromhex(text.replace(" ", ""))


def tokens_of(payload: bytes):
    cls = classify_payload(payload)
    assert cls.valid, cls.reason
    (pdu,) = cls.pdus
    return extract_function_token(pdu), extract_parameter_tokens(pdu)


# -- TPKT ---------------------------------------------------------------------


def test_tpkt_decodes_fields():
    frame = parse_tpkt(h("03 00 00 07 AA BB CC"))
    assert (frame.version, frame.length, frame.payload) == (3, 7, h("AA BB CC"))


def test_tpkt_minimal_frame():
    frame = parse_tpkt(h("03 00 00 04"))
    assert frame.length == 4 and frame.payload == b""


def test_tpkt_bad_version():
    with pytest.raises(BadVersion):
        parse_tpkt(h("04 00 00 07 AA BB CC"))


@pytest.mark.parametrize("raw", ["03 00 00", "03 00 00 09 AA BB", "03 00 00 02"])
def test_tpkt_truncated(raw):
    with pytest.raises(TruncatedFrame):
        parse_tpkt(h(raw))


def test_tpkt_consumes_only_its_length():
    data = h("03 00 00 05 AA 03 00 00 04")
    frame = parse_tpkt(data)
    assert frame.payload == h("AA")
    assert data[frame.length :] == h("03 00 00 04")


@given(st.lists(st.binary(max_size=40), max_size=8))
def test_pipelined_frames_split_exactly(payloads):
    stream = b"".join(
        bytes([3, 0]) + (4 + len(p)).to_bytes(2, "big") + p for p in payloads
    )
    frames = parse_tpkt_stream(stream)
    assert [f.payload for f in frames] == payloads
    assert sum(f.length for f in frames) == len(stream)


# -- COTP ---------------------------------------------------------------------


def test_cotp_data_tpdu():
    pdu = parse_cotp(h("02 F0 80 32 01"))
    assert (pdu.header_length, pdu.pdu_type, pdu.payload) == (2, 0xF0, h("32 01"))
    assert pdu.variable_part == h("80")


def test_cotp_connection_request_has_empty_payload():
    frame = parse_tpkt(connection_request())
    assert frame.payload[0] == 0x11
    pdu = parse_cotp(frame.payload)
    assert pdu.pdu_type == CotpType.CONNECTION_REQUEST
    assert pdu.payload == b""
    assert pdu.header_length == len(frame.payload) - 1


def test_cotp_truncated():
    with pytest.raises(TruncatedPdu):
        parse_cotp(h("02"))
    with pytest.raises(TruncatedPdu):
        parse_cotp(h("05 F0 80"))


def test_cotp_unknown_type_is_not_fatal(caplog):
    pdu = parse_cotp(h("02 A5 00 11 22"))
    assert not pdu.known
    assert "unknown COTP" in caplog.text


# -- S7 -----------------------------------------------------------------------


def test_s7_setup_header():
    pdu = parse_s7(h("32 01 00 00 00 01 00 01 00 00 F0"))
    assert pdu.magic == 0x32 and pdu.s7_type == 1
    assert (pdu.param_length, pdu.data_length, pdu.parameters) == (1, 0, h("F0"))
    assert function_name(extract_function_token(pdu)) == "Communication Setup"


def test_s7_bad_magic():
    with pytest.raises(BadMagic):
        parse_s7(h("31 01 00 00 00 01 00 01 00 00 F0"))


def test_s7_read_function_code():
    pdu = parse_s7(h("32 01 00 00 00 01 00 05 00 00 04 01 12 0A 10"))
    assert pdu.parameters[0] == 0x04
    assert extract_function_token(pdu).name == "Read"


def test_s7_lengths_beyond_buffer_are_truncated():
    # param_length 5 but a single parameter byte present
    with pytest.raises(TruncatedPdu):
        parse_s7(h("32 01 00 00 00 01 00 05 00 00 04"))
    with pytest.raises(TruncatedPdu):
        parse_s7(h("32 01 00 00"))


def test_s7_ack_data_header_is_twelve_bytes():
    pdu = parse_s7(h("32 03 00 00 00 07 00 02 00 00 00 00 F0 00"))
    assert (pdu.error_class, pdu.error_code, pdu.parameters) == (0, 0, h("F0 00"))


# -- function tokens ------------------------------------------------------------


def _pdu(params: bytes, data: bytes = b"", ref: int = 0) -> S7Pdu:
    return S7Pdu(0x32, 1, ref, len(params), len(data), params, data)


def test_function_token_setup():
    tok = extract_function_token(_pdu(h("F0 00 00 01 00 01 01 E0")))
    assert tok == FunctionToken(0xF0) and tok.name == "Communication Setup"


@pytest.mark.parametrize(
    "group,sub,name",
    [(4, 1, "Read SZL"), (7, 1, "Read clock"), (3, 1, "List blocks"), (5, 1, "PLC password")],
)
def test_function_token_system_functions(group, sub, name):
    params = bytes([0x00, 0x01, 0x12, 0x04, 0x11, 0x40 | group, sub, 0x00])
    tok = extract_function_token(_pdu(params))
    assert (tok.function_code, tok.group, tok.subfunction) == (0, group, sub)
    assert tok.name == name


def test_function_token_empty_parameters():
    with pytest.raises(EmptyParameters):
        extract_function_token(_pdu(b""))


def test_unknown_function_code_still_tokenized():
    tok = extract_function_token(_pdu(h("3A 00")))
    assert tok.function_code == 0x3A and not tok.known and tok.name == UNKNOWN


def test_table_lookup_is_exhaustive():
    for code in range(256):
        tok = FunctionToken(code)
        if code == 0x00:
            continue
        assert (tok.name != UNKNOWN) == (code in FUNCTION_NAMES)
    for group in range(16):
        for sub in range(256):
            name = FunctionToken(0x00, group, sub).name
            listed = (group, sub) in SUBFUNCTION_NAMES or group == 6
            assert (name != UNKNOWN) == listed


# -- parameter tokens -------------------------------------------------------------


def test_read_szl_tokens():
    payload = serialize_request(
        FunctionToken(0, 4, 1), [ParamToken("GRP", "4"), ParamToken("SUB", "1"), ParamToken("SZL", "001C")]
    )
    _, params = tokens_of(payload)
    assert [str(p) for p in params] == ["GRP:4", "SUB:1", "SZL:001C"]


def test_setup_tokens_from_fixed_layout():
    payload = h("03 00 00 19 02 F0 80 32 01 00 00 04 00 00 08 00 00 F0 00 00 01 00 01 01 E0")
    _, params = tokens_of(payload)
    assert [p.kind for p in params] == ["PDUREF", "MAXAMQ_CALLER", "MAXAMQ_CALLEE", "PDU_SIZE"]
    assert [p.value for p in params] == ["0400", "0001", "0001", "01E0"]


def test_tokens_are_deterministic():
    pdu = _pdu(h("04 01 12 0A 10 02 00 01 00 01 84 00 00 00"))
    assert extract_parameter_tokens(pdu) == extract_parameter_tokens(_pdu(pdu.parameters))


def test_unparseable_tail_is_one_opaque_token():
    pdu = _pdu(h("04 02 12 0A"))
    assert extract_parameter_tokens(pdu) == [ParamToken("OPAQUE", "02120A")]


def test_upload_end_has_no_parameters():
    pdu = _pdu(h("1F 00 00 00 00 00 00 07"))
    assert extract_parameter_tokens(pdu) == []


# -- serialization ------------------------------------------------------------


def test_serialize_setup_roundtrip():
    params = [ParamToken("PDUREF", "0000"), ParamToken("MAXAMQ_CALLER", "0001"),
              ParamToken("MAXAMQ_CALLEE", "0001"), ParamToken("PDU_SIZE", "01E0")]
    assert tokens_of(serialize_request(FunctionToken(0xF0), params)) == (FunctionToken(0xF0), params)


def test_serialize_list_blocks_roundtrip():
    tok = FunctionToken(0, 3, 1)
    params = [ParamToken("GRP", "3"), ParamToken("SUB", "1")]
    assert tokens_of(serialize_request(tok, params)) == (tok, params)
    assert tok.name == "List blocks"


@pytest.mark.parametrize(
    "token,params",
    [
        (FunctionToken(0x3A), []),
        (FunctionToken(0, 4, 9), [ParamToken("GRP", "4"), ParamToken("SUB", "9")]),
        (FunctionToken(0, 4, 1), [ParamToken("GRP", "3"), ParamToken("SUB", "1")]),
        (FunctionToken(0x04), []),
        (FunctionToken(0x29), [ParamToken("PI", "")]),
        (FunctionToken(0xF0), [ParamToken("PDU_SIZE", "01E0")]),
    ],
)
def test_serialize_rejects_unsupported(token, params):
    with pytest.raises(UnsupportedFunction):
        serialize_request(token, params)


@settings(max_examples=300)
@given(st.randoms(use_true_random=False))
def test_random_grammar_roundtrip(rng):
    token, params = random_request(rng)
    assert tokens_of(serialize_request(token, params)) == (token, params)


@settings(max_examples=300)
@given(st.binary(max_size=64))
def test_validity_predicate_is_total(blob):
    cls = classify_payload(blob)
    assert isinstance(cls.valid, bool) and cls.reason
    assert cls.valid == bool(cls.pdus)


def test_connection_request_is_not_a_valid_request():
    cls = classify_payload(connection_request())
    assert not cls.valid and cls.reason == "cotp_connection"


def test_pipelined_requests_in_one_payload():
    rng = random.Random(3)
    reqs = [random_request(rng) for _ in range(4)]
    blob = b"".join(serialize_request(t, p) for t, p in reqs)
    cls = classify_payload(blob)
    assert cls.valid and len(cls.pdus) == 4
    assert [extract_function_token(p) for p in cls.pdus] == [t for t, _ in reqs]
