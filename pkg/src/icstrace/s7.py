"""S7comm over ISO-on-TCP (RFC 1006).

Layering of a single request as sent to TCP port 102::

    +------+------------------+---------------------------------------+
    | TPKT | COTP (DT 02 F0 80)| S7: 32 type res ref plen dlen | P | D  |
    +------+------------------+---------------------------------------+

The first parameter byte of an S7 PDU is its function code.  For code
0x00 (system functions, carried in USERDATA PDUs) the function group sits
in the low nibble of parameter byte 5 and the subfunction in byte 6.

Parameter tokenization follows the public S7comm dissection layouts; see
``extract_parameter_tokens`` for the per-function schemas.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

from .errors import (
    BadMagic,
    BadVersion,
    EmptyParameters,
    ProtocolError,
    TruncatedFrame,
    TruncatedPdu,
    UnsupportedFunction,
)

logger = logging.getLogger(__name__)

TPKT_VERSION = 0x03
TPKT_HEADER_LEN = 4
S7_MAGIC = 0x32
UNKNOWN = "UNKNOWN"


class CotpType(IntEnum):
    CONNECTION_REQUEST = 0xE0
    CONNECTION_CONFIRM = 0xD0
    DATA = 0xF0


class S7Type(IntEnum):
    JOB = 0x01
    ACK = 0x02
    ACK_DATA = 0x03
    USERDATA = 0x07


FUNCTION_NAMES: dict[int, str] = {
    0x00: "System Functions",
    0x04: "Read",
    0x05: "Write",
    0x1A: "Request Download",
    0x1B: "Download Block",
    0x1C: "Download End",
    0x1D: "Download Start",
    0x1E: "Upload",
    0x1F: "Upload End",
    0x28: "PLC Control",
    0x29: "PLC Stop",
    0xF0: "Communication Setup",
}

FUNCTION_GROUP_NAMES: dict[int, str] = {
    1: "Programmer Commands",
    2: "Cyclic Data",
    3: "Block Function",
    4: "CPU Function",
    5: "Security",
    6: "PBC BSEND/BRECV",
    7: "Time Function",
}

# Group 6 has no subfunctions; any subfunction byte resolves to the group name.
SUBFUNCTION_NAMES: dict[tuple[int, int], str] = {
    (1, 1): "Request diag data",
    (1, 2): "VarTab",
    (2, 1): "Memory",
    (3, 1): "List blocks",
    (3, 2): "List blocks of type",
    (3, 3): "Get block info",
    (4, 1): "Read SZL",
    (4, 2): "Message service",
    (5, 1): "PLC password",
    (7, 1): "Read clock",
    (7, 2): "Set clock",
    (7, 3): "Set clock",
    (7, 4): "Read clock (following)",
}


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TpktFrame:
    version: int
    reserved: int
    length: int
    payload: bytes

    def pack(self) -> bytes:
        return struct.pack(">BBH", self.version, self.reserved, self.length) + self.payload


@dataclass(frozen=True)
class CotpPdu:
    header_length: int
    pdu_type: int
    variable_part: bytes
    payload: bytes

    @property
    def known(self) -> bool:
        return self.pdu_type in CotpType._value2member_map_


@dataclass(frozen=True)
class S7Pdu:
    magic: int
    s7_type: int
    data_unit_ref: int
    param_length: int
    data_length: int
    parameters: bytes
    data: bytes
    reserved: int = 0
    error_class: int | None = None
    error_code: int | None = None


def parse_tpkt(data: bytes) -> TpktFrame:
    """Decode the TPKT frame at the start of ``data``.

    Exactly ``frame.length`` bytes are consumed; anything after that belongs
    to the next pipelined frame (``data[frame.length:]``).
    """
    if len(data) < TPKT_HEADER_LEN:
        raise TruncatedFrame(f"need {TPKT_HEADER_LEN} header bytes, got {len(data)}")
    version, reserved, length = struct.unpack_from(">BBH", data)
    if version != TPKT_VERSION:
        raise BadVersion(f"TPKT version {version} != {TPKT_VERSION}")
    if length < TPKT_HEADER_LEN:
        raise TruncatedFrame(f"declared length {length} shorter than the header")
    if len(data) < length:
        raise TruncatedFrame(f"declared length {length}, only {len(data)} bytes available")
    return TpktFrame(version, reserved, length, bytes(data[TPKT_HEADER_LEN:length]))


def parse_tpkt_stream(data: bytes) -> list[TpktFrame]:
    """Split a byte stream of back-to-back TPKT frames."""
    frames = []
    offset = 0
    while offset < len(data):
        frame = parse_tpkt(data[offset:])
        frames.append(frame)
        offset += frame.length
    return frames


def parse_cotp(data: bytes) -> CotpPdu:
    if len(data) < 2:
        raise TruncatedPdu(f"COTP needs at least 2 bytes, got {len(data)}")
    header_length = data[0]
    if header_length < 1 or len(data) < 1 + header_length:
        raise TruncatedPdu(f"COTP header length {header_length} exceeds {len(data) - 1} bytes")
    pdu = CotpPdu(
        header_length=header_length,
        pdu_type=data[1],
        variable_part=bytes(data[2 : 1 + header_length]),
        payload=bytes(data[1 + header_length :]),
    )
    if not pdu.known:
        logger.warning("unknown COTP PDU type 0x%02X, payload skipped", pdu.pdu_type)
    return pdu


def parse_s7(data: bytes) -> S7Pdu:
    if len(data) < 10:
        raise TruncatedPdu(f"S7 header needs 10 bytes, got {len(data)}")
    if data[0] != S7_MAGIC:
        raise BadMagic(f"magic 0x{data[0]:02X} != 0x{S7_MAGIC:02X}")
    magic, s7_type, reserved, ref, plen, dlen = struct.unpack_from(">BBHHHH", data)
    offset = 10
    error_class = error_code = None
    if s7_type in (S7Type.ACK, S7Type.ACK_DATA):
        if len(data) < 12:
            raise TruncatedPdu("acknowledge header needs 12 bytes")
        error_class, error_code = data[10], data[11]
        offset = 12
    if offset + plen + dlen > len(data):
        raise TruncatedPdu(
            f"param_length {plen} + data_length {dlen} exceed {len(data) - offset} bytes"
        )
    params = bytes(data[offset : offset + plen])
    payload = bytes(data[offset + plen : offset + plen + dlen])
    return S7Pdu(magic, s7_type, ref, plen, dlen, params, payload, reserved, error_class, error_code)


def pack_s7(pdu: S7Pdu) -> bytes:
    head = struct.pack(
        ">BBHHHH", pdu.magic, pdu.s7_type, pdu.reserved, pdu.data_unit_ref,
        len(pdu.parameters), len(pdu.data),
    )
    if pdu.s7_type in (S7Type.ACK, S7Type.ACK_DATA):
        head += bytes([pdu.error_class or 0, pdu.error_code or 0])
    return head + pdu.parameters + pdu.data


def wrap_iso_on_tcp(s7_bytes: bytes) -> bytes:
    """Frame an S7 PDU in a COTP data TPDU and a TPKT header."""
    cotp = bytes([0x02, CotpType.DATA, 0x80]) + s7_bytes
    return TpktFrame(TPKT_VERSION, 0, TPKT_HEADER_LEN + len(cotp), cotp).pack()


# ---------------------------------------------------------------------------
# Tokens
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class FunctionToken:
    function_code: int
    group: int | None = None
    subfunction: int | None = None

    @property
    def known(self) -> bool:
        if self.function_code not in FUNCTION_NAMES:
            return False
        if self.function_code != 0x00:
            return self.group is None and self.subfunction is None
        if self.group == 6:
            return self.subfunction is not None
        return (self.group, self.subfunction) in SUBFUNCTION_NAMES

    @property
    def name(self) -> str:
        return function_name(self)

    @property
    def symbol(self) -> str:
        """Stable identifier used in function-code sequences."""
        if self.function_code == 0x00 and self.group is not None:
            return f"00/{self.group}/{self.subfunction}"
        return f"{self.function_code:02X}"

    @classmethod
    def from_symbol(cls, symbol: str) -> "FunctionToken":
        parts = symbol.split("/")
        if len(parts) == 3:
            return cls(int(parts[0], 16), int(parts[1]), int(parts[2]))
        if len(parts) == 1:
            return cls(int(parts[0], 16))
        raise ValueError(f"bad function symbol {symbol!r}")


def function_name(token: FunctionToken) -> str:
    """Resolve a token to its Table-3/Table-4 name, or ``UNKNOWN``."""
    code = token.function_code
    if code not in FUNCTION_NAMES:
        return UNKNOWN
    if code != 0x00:
        return FUNCTION_NAMES[code] if token.group is None else UNKNOWN
    if token.group == 6 and token.subfunction is not None:
        return FUNCTION_GROUP_NAMES[6]
    return SUBFUNCTION_NAMES.get((token.group, token.subfunction), UNKNOWN)


@dataclass(frozen=True, order=True)
class ParamToken:
    kind: str
    value: str = ""

    def __str__(self) -> str:
        return f"{self.kind}:{self.value}" if self.value else self.kind

    @classmethod
    def parse(cls, text: str) -> "ParamToken":
        kind, _, value = text.partition(":")
        return cls(kind, value)


def extract_function_token(pdu: S7Pdu) -> FunctionToken:
    params = pdu.parameters
    if not params:
        raise EmptyParameters("S7 PDU carries no parameters")
    code = params[0]
    if code != 0x00:
        return FunctionToken(code)
    if len(params) < 7:
        raise TruncatedPdu("system-function parameters shorter than 7 bytes")
    return FunctionToken(0x00, params[5] & 0x0F, params[6])


class _Layout(Exception):
    """Internal: bytes do not follow the expected schema."""


def _need(buf: bytes, n: int) -> None:
    if len(buf) < n:
        raise _Layout


def _ascii(raw: bytes) -> str:
    if not raw or any(b < 0x20 or b > 0x7E for b in raw):
        raise _Layout
    return raw.decode("ascii")


def _is_bcd(raw: bytes) -> bool:
    return all((b >> 4) < 10 and (b & 0x0F) < 10 for b in raw)


# Read/write item: 12 12 0A 10 ts len(2) db(2) area addr(3)
_ITEM = struct.Struct(">BBBBHHB3s")
_BYTE_LENGTH_IN_BITS = {0x03, 0x04, 0x05}


def _var_items(params: bytes) -> tuple[list[ParamToken], list[int]]:
    _need(params, 2)
    count = params[1]
    if len(params) != 2 + count * _ITEM.size or count == 0:
        raise _Layout
    tokens, sizes = [], []
    for i in range(count):
        spec, length, syntax, ts, n, db, area, addr = _ITEM.unpack_from(params, 2 + i * _ITEM.size)
        if (spec, length, syntax) != (0x12, 0x0A, 0x10):
            raise _Layout
        address = int.from_bytes(addr, "big")
        tokens.append(ParamToken("ITEM", f"{area:02X}/{ts:02X}/{db}/{address}/{n}"))
        sizes.append(n)
    return tokens, sizes


def _write_data(data: bytes, count: int) -> list[ParamToken]:
    tokens = []
    offset = 0
    for i in range(count):
        _need(data, offset + 4)
        _ret, ts, length = struct.unpack_from(">BBH", data, offset)
        nbytes = (length + 7) // 8 if ts in _BYTE_LENGTH_IN_BITS else length
        offset += 4 + nbytes
        _need(data, offset)
        if nbytes % 2 and i < count - 1:
            offset += 1
        tokens.append(ParamToken("DATA", f"{ts:02X}/{nbytes}"))
    if offset != len(data):
        raise _Layout
    return tokens


def _userdata_tokens(params: bytes, data: bytes) -> list[ParamToken]:
    _need(params, 8)
    if params[1:3] != b"\x01\x12":
        raise _Layout
    group, sub = params[5] & 0x0F, params[6]
    tokens = [ParamToken("GRP", str(group)), ParamToken("SUB", str(sub))]
    if not data or data[0] == 0x0A:
        return tokens
    _need(data, 4)
    length = struct.unpack_from(">H", data, 2)[0]
    payload = data[4:]
    if len(payload) != length:
        raise _Layout
    key = (group, sub)
    if key == (4, 1) and length == 4:
        szl_id, index = struct.unpack(">HH", payload)
        tokens.append(ParamToken("SZL", f"{szl_id:04X}"))
        if index:
            tokens.append(ParamToken("SZLIDX", f"{index:04X}"))
    elif key == (3, 2) and length == 2 and payload[0] == 0x30:
        tokens.append(ParamToken("BLOCKTYPE", f"{payload[1]:02X}"))
    elif key == (3, 3) and length == 8 and payload[0] == 0x30:
        number = _ascii(payload[2:7])
        if not number.isdigit():
            raise _Layout
        tokens.append(ParamToken("BLOCK", f"{payload[1]:02X}/{number}"))
    elif key == (5, 1) and length == 8:
        tokens.append(ParamToken("PASSWORD"))
    elif key in ((7, 2), (7, 3)) and length == 10:
        tokens.append(ParamToken("CLOCK", "BCD" if _is_bcd(payload) else "RAW"))
    elif payload:
        tokens.append(ParamToken("OPAQUE", payload.hex().upper()))
    return tokens


def _transfer_tokens(code: int, params: bytes) -> list[ParamToken]:
    # code status unknown(2) id(4) [name_len name [rest]]
    _need(params, 8)
    if code in (0x1E, 0x1F):
        if len(params) != 8:
            raise _Layout
        return []
    _need(params, 9)
    end = 9 + params[8]
    _need(params, end)
    tokens = [ParamToken("FILE", _ascii(params[9:end]))]
    if end < len(params):
        tokens.append(ParamToken("OPAQUE", params[end:].hex().upper()))
    return tokens


def _schema_tokens(pdu: S7Pdu) -> list[ParamToken]:
    params, data = pdu.parameters, pdu.data
    code = params[0]
    if code == 0xF0:
        if len(params) != 8 or data:
            raise _Layout
        caller, callee, size = struct.unpack_from(">HHH", params, 2)
        return [
            ParamToken("PDUREF", f"{pdu.data_unit_ref:04X}"),
            ParamToken("MAXAMQ_CALLER", f"{caller:04X}"),
            ParamToken("MAXAMQ_CALLEE", f"{callee:04X}"),
            ParamToken("PDU_SIZE", f"{size:04X}"),
        ]
    if code == 0x04:
        if data:
            raise _Layout
        return _var_items(params)[0]
    if code == 0x05:
        items, _ = _var_items(params)
        return items + _write_data(data, len(items))
    if code == 0x00:
        return _userdata_tokens(params, data)
    if data:
        raise _Layout
    if 0x1A <= code <= 0x1F:
        return _transfer_tokens(code, params)
    if code == 0x28:
        # code unknown(6) 0xFD argblock_len(2) argblock name_len name
        _need(params, 10)
        arg_len = struct.unpack_from(">H", params, 8)[0]
        _need(params, 11 + arg_len)
        name_len = params[10 + arg_len]
        if len(params) != 11 + arg_len + name_len:
            raise _Layout
        tokens = []
        if arg_len:
            tokens.append(ParamToken("ARG", params[10 : 10 + arg_len].hex().upper()))
        tokens.append(ParamToken("PI", _ascii(params[11 + arg_len :])))
        return tokens
    if code == 0x29:
        # code unknown(5) name_len name
        _need(params, 7)
        if len(params) != 7 + params[6]:
            raise _Layout
        return [ParamToken("PI", _ascii(params[7:]))]
    raise _Layout


def extract_parameter_tokens(pdu: S7Pdu) -> list[ParamToken]:
    """Deterministic parameter tokens of one request, in byte order.

    Schemas per function code:

    * 0xF0 setup: PDUREF (header data-unit ref), MAXAMQ_CALLER,
      MAXAMQ_CALLEE, PDU_SIZE.
    * 0x04/0x05 read/write: one ITEM per S7ANY address
      (area/transport size/db/address/count); writes add DATA per item
      (transport size/byte count, the written values are not tokenized).
    * 0x00 system functions: GRP, SUB, then SZL (+SZLIDX when non-zero),
      BLOCKTYPE, BLOCK, PASSWORD (presence only) or CLOCK (value class).
    * 0x1A-0x1D: FILE (block file name); 0x1E/0x1F carry none.
    * 0x28/0x29: ARG (argument block, if any) and PI (service name).

    Anything that does not fit its schema collapses into one OPAQUE token
    holding the raw bytes after the function code.
    """
    params = pdu.parameters
    if not params:
        return []
    try:
        return _schema_tokens(pdu)
    except _Layout:
        raw = params[1:] + pdu.data
        return [ParamToken("OPAQUE", raw.hex().upper())] if raw else []


# ---------------------------------------------------------------------------
# Request classification
# ---------------------------------------------------------------------------

REASON_OK = "ok"
REASON_EMPTY = "empty"
REASON_COTP_CONNECTION = "cotp_connection"
REASON_UNKNOWN_COTP = "unknown_cotp_type"
REASON_NO_S7 = "no_s7_payload"


@dataclass(frozen=True)
class Classification:
    valid: bool
    reason: str
    pdus: tuple[S7Pdu, ...] = field(default=(), repr=False)


def classify_payload(payload: bytes) -> Classification:
    """Total validity predicate: never raises, always returns a reason.

    A payload is valid iff every TPKT frame decodes and at least one frame
    carries an S7 PDU with the 0x32 magic.  COTP connection request/confirm
    frames decode fine but carry no S7 PDU.
    """
    if not payload:
        return Classification(False, REASON_EMPTY)
    try:
        frames = parse_tpkt_stream(payload)
        pdus = []
        saw_connect = saw_unknown = False
        for frame in frames:
            cotp = parse_cotp(frame.payload)
            if cotp.pdu_type == CotpType.DATA:
                if cotp.payload:
                    pdus.append(parse_s7(cotp.payload))
            elif cotp.known:
                saw_connect = True
            else:
                saw_unknown = True
    except ProtocolError as exc:
        return Classification(False, exc.reason)
    if pdus:
        return Classification(True, REASON_OK, tuple(pdus))
    if saw_unknown:
        return Classification(False, REASON_UNKNOWN_COTP)
    if saw_connect:
        return Classification(False, REASON_COTP_CONNECTION)
    return Classification(False, REASON_NO_S7)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CLOCK_BCD = bytes.fromhex("00171231235959000001")
_PASSWORD_BLOB = bytes.fromhex("7767675555777766")


def _split(params: Sequence[ParamToken], *kinds: str) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {k: [] for k in kinds}
    for tok in params:
        if tok.kind not in out:
            raise UnsupportedFunction(f"token {tok} not allowed here")
        out[tok.kind].append(tok.value)
    return out


def _pack_item(value: str) -> bytes:
    area, ts, db, address, n = value.split("/")
    return _ITEM.pack(
        0x12, 0x0A, 0x10, int(ts, 16), int(n), int(db), int(area, 16),
        int(address).to_bytes(3, "big"),
    )


def _pack_data_item(value: str, last: bool) -> bytes:
    ts_text, nbytes_text = value.split("/")
    ts, nbytes = int(ts_text, 16), int(nbytes_text)
    length = nbytes * 8 if ts in _BYTE_LENGTH_IN_BITS else nbytes
    out = struct.pack(">BBH", 0x00, ts, length) + bytes(nbytes)
    if nbytes % 2 and not last:
        out += b"\x00"
    return out


def _userdata_payload(token: FunctionToken, rest: Sequence[ParamToken]) -> bytes:
    key = (token.group, token.subfunction)
    kinds = [t.kind for t in rest]
    if not rest:
        return b""
    if key == (4, 1) and kinds in (["SZL"], ["SZL", "SZLIDX"]):
        index = int(rest[1].value, 16) if len(rest) == 2 else 0
        if index == 0 and len(rest) == 2:
            raise UnsupportedFunction("SZLIDX:0000 is implied by its absence")
        return struct.pack(">HH", int(rest[0].value, 16), index)
    if key == (3, 2) and kinds == ["BLOCKTYPE"]:
        return bytes([0x30, int(rest[0].value, 16)])
    if key == (3, 3) and kinds == ["BLOCK"]:
        btype, number = rest[0].value.split("/")
        if len(number) != 5 or not number.isdigit():
            raise UnsupportedFunction(f"block number {number!r} must be 5 digits")
        return bytes([0x30, int(btype, 16)]) + number.encode("ascii") + b"A"
    if key == (5, 1) and kinds == ["PASSWORD"] and not rest[0].value:
        return _PASSWORD_BLOB
    if key in ((7, 2), (7, 3)) and kinds == ["CLOCK"]:
        if rest[0].value == "BCD":
            return _CLOCK_BCD
        if rest[0].value == "RAW":
            return b"\xff" * 10
    if kinds == ["OPAQUE"] and key not in {(4, 1), (3, 2), (3, 3), (5, 1), (7, 2), (7, 3)}:
        return bytes.fromhex(rest[0].value)
    raise UnsupportedFunction(f"parameters {[str(t) for t in rest]} do not fit {token.name}")


def _name_field(value: str) -> bytes:
    raw = value.encode("ascii")
    if not raw or len(raw) > 255 or any(b < 0x20 or b > 0x7E for b in raw):
        raise UnsupportedFunction(f"name {value!r} is not a printable ASCII field")
    return bytes([len(raw)]) + raw


def serialize_request(
    token: FunctionToken, params: Iterable[ParamToken] = (), *, pdu_ref: int = 0
) -> bytes:
    """Build a complete TPKT/COTP/S7 request realizing ``token`` and ``params``.

    The inverse of the parsers at the token level: feeding the result back
    through ``classify_payload`` and the extractors yields the same tokens.
    """
    if not token.known:
        raise UnsupportedFunction(f"{token} is not a known function/subfunction")
    params = list(params)
    code = token.function_code
    s7_type = S7Type.JOB
    data = b""
    try:
        if code == 0xF0:
            vals = _split(params, "PDUREF", "MAXAMQ_CALLER", "MAXAMQ_CALLEE", "PDU_SIZE")
            if [str(p.kind) for p in params] != ["PDUREF", "MAXAMQ_CALLER", "MAXAMQ_CALLEE", "PDU_SIZE"]:
                raise UnsupportedFunction("setup needs PDUREF, MAXAMQ_CALLER, MAXAMQ_CALLEE, PDU_SIZE")
            pdu_ref = int(vals["PDUREF"][0], 16)
            body = struct.pack(
                ">BBHHH", 0xF0, 0x00, int(vals["MAXAMQ_CALLER"][0], 16),
                int(vals["MAXAMQ_CALLEE"][0], 16), int(vals["PDU_SIZE"][0], 16),
            )
        elif code in (0x04, 0x05):
            vals = _split(params, "ITEM", "DATA")
            items = vals["ITEM"]
            kinds = [p.kind for p in params]
            expected = ["ITEM"] * len(items) + (["DATA"] * len(items) if code == 0x05 else [])
            if not items or len(items) > 255 or kinds != expected:
                raise UnsupportedFunction("read/write needs 1..255 ITEM tokens (+ one DATA each for write)")
            body = bytes([code, len(items)]) + b"".join(_pack_item(v) for v in items)
            if code == 0x05:
                data = b"".join(
                    _pack_data_item(v, i == len(items) - 1) for i, v in enumerate(vals["DATA"])
                )
        elif code == 0x00:
            s7_type = S7Type.USERDATA
            head = [ParamToken("GRP", str(token.group)), ParamToken("SUB", str(token.subfunction))]
            if params[:2] != head:
                raise UnsupportedFunction("system functions start with matching GRP and SUB tokens")
            body = bytes([0x00, 0x01, 0x12, 0x04, 0x11, 0x40 | token.group, token.subfunction, 0x00])
            payload = _userdata_payload(token, params[2:])
            if payload:
                data = struct.pack(">BBH", 0xFF, 0x09, len(payload)) + payload
            else:
                data = bytes([0x0A, 0x00, 0x00, 0x00])
        elif code in (0x1E, 0x1F):
            if params:
                raise UnsupportedFunction(f"{token.name} takes no parameters")
            body = bytes([code]) + bytes(7)
        elif 0x1A <= code <= 0x1D:
            kinds = [p.kind for p in params]
            if kinds not in (["FILE"], ["FILE", "OPAQUE"]):
                raise UnsupportedFunction(f"{token.name} needs FILE [OPAQUE]")
            body = bytes([code, 0x00, 0x01]) + bytes(5) + _name_field(params[0].value)
            if len(params) == 2:
                body += bytes.fromhex(params[1].value)
        elif code == 0x28:
            kinds = [p.kind for p in params]
            if kinds not in (["PI"], ["ARG", "PI"]):
                raise UnsupportedFunction("PLC control needs [ARG] PI")
            arg = bytes.fromhex(params[0].value) if len(params) == 2 else b""
            body = (
                bytes([0x28]) + bytes(6) + b"\xfd" + struct.pack(">H", len(arg)) + arg
                + _name_field(params[-1].value)
            )
        elif code == 0x29:
            if [p.kind for p in params] != ["PI"]:
                raise UnsupportedFunction("PLC stop needs PI")
            body = bytes([0x29]) + bytes(5) + _name_field(params[0].value)
        else:  # pragma: no cover - known codes are exhausted above
            raise UnsupportedFunction(token.name)
    except (ValueError, IndexError, struct.error, OverflowError) as exc:
        if isinstance(exc, UnsupportedFunction):
            raise
        raise UnsupportedFunction(f"cannot encode {token.symbol} {[str(p) for p in params]}: {exc}") from exc
    if len(body) > 0xFFFF or len(data) > 0xFFFF:
        raise UnsupportedFunction("PDU too large")
    pdu = S7Pdu(S7_MAGIC, s7_type, pdu_ref & 0xFFFF, len(body), len(data), body, data)
    return wrap_iso_on_tcp(pack_s7(pdu))


def connection_request(src_tsap: int = 0x0100, dst_tsap: int = 0x0102) -> bytes:
    """COTP connection request frame (no S7 payload)."""
    variable = (
        b"\x00\x00\x00\x01\x00"  # dst ref, src ref, class
        + b"\xc0\x01\x0a"
        + b"\xc1\x02" + struct.pack(">H", src_tsap)
        + b"\xc2\x02" + struct.pack(">H", dst_tsap)
    )
    cotp = bytes([1 + len(variable), CotpType.CONNECTION_REQUEST]) + variable
    return TpktFrame(TPKT_VERSION, 0, TPKT_HEADER_LEN + len(cotp), cotp).pack()
