"""Random sampler over the supported request token grammar.

Shared by the property tests and the acceptance fuzz run; kept in plain
``random`` so 10k samples stay well under a second.
"""

from __future__ import annotations

import random

from icstrace.s7 import FUNCTION_NAMES, SUBFUNCTION_NAMES, FunctionToken, ParamToken

_PRINTABLE = "".join(chr(c) for c in range(0x20, 0x7F))


def _hex(rng: random.Random, nbytes: int) -> str:
    return rng.randbytes(nbytes).hex().upper()


def _name(rng: random.Random) -> str:
    return "".join(rng.choice(_PRINTABLE) for _ in range(rng.randint(1, 12)))


def _item(rng: random.Random) -> ParamToken:
    area = rng.choice([0x81, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x1C, 0x1D])
    ts = rng.choice([0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08])
    return ParamToken(
        "ITEM",
        f"{area:02X}/{ts:02X}/{rng.randrange(1 << 16)}/{rng.randrange(1 << 24)}/{rng.randrange(1 << 16)}",
    )


def _system_tail(rng: random.Random, group: int, sub: int) -> list[ParamToken]:
    key = (group, sub)
    if key == (4, 1):
        out = [ParamToken("SZL", _hex(rng, 2))]
        if rng.random() < 0.5:
            out.append(ParamToken("SZLIDX", f"{rng.randrange(1, 1 << 16):04X}"))
        return out
    if rng.random() < 0.3:
        return []
    if key == (3, 2):
        return [ParamToken("BLOCKTYPE", _hex(rng, 1))]
    if key == (3, 3):
        return [ParamToken("BLOCK", f"{_hex(rng, 1)}/{rng.randrange(100000):05d}")]
    if key == (5, 1):
        return [ParamToken("PASSWORD")]
    if key in ((7, 2), (7, 3)):
        return [ParamToken("CLOCK", rng.choice(["BCD", "RAW"]))]
    return [ParamToken("OPAQUE", _hex(rng, rng.randint(1, 16)))]


def random_request(rng: random.Random) -> tuple[FunctionToken, list[ParamToken]]:
    code = rng.choice(sorted(FUNCTION_NAMES))
    if code == 0x00:
        if rng.random() < 0.1:
            group, sub = 6, rng.randrange(256)
        else:
            group, sub = rng.choice(sorted(SUBFUNCTION_NAMES))
        head = [ParamToken("GRP", str(group)), ParamToken("SUB", str(sub))]
        return FunctionToken(0x00, group, sub), head + _system_tail(rng, group, sub)
    token = FunctionToken(code)
    if code == 0xF0:
        return token, [
            ParamToken("PDUREF", _hex(rng, 2)),
            ParamToken("MAXAMQ_CALLER", _hex(rng, 2)),
            ParamToken("MAXAMQ_CALLEE", _hex(rng, 2)),
            ParamToken("PDU_SIZE", _hex(rng, 2)),
        ]
    if code in (0x04, 0x05):
        items = [_item(rng) for _ in range(rng.randint(1, 5))]
        if code == 0x05:
            items += [
                ParamToken("DATA", f"{rng.choice([0x03, 0x04, 0x09]):02X}/{rng.randint(0, 9)}")
                for _ in range(len(items))
            ]
        return token, items
    if code in (0x1E, 0x1F):
        return token, []
    if 0x1A <= code <= 0x1D:
        out = [ParamToken("FILE", _name(rng))]
        if rng.random() < 0.3:
            out.append(ParamToken("OPAQUE", _hex(rng, rng.randint(1, 8))))
        return token, out
    if code == 0x28:
        out = [ParamToken("ARG", _hex(rng, rng.randint(1, 8)))] if rng.random() < 0.5 else []
        return token, out + [ParamToken("PI", _name(rng))]
    return token, [ParamToken("PI", _name(rng))]


_JUNK = bytes.fromhex("474554202f20485454502f312e31")


def random_corpus(rng: random.Random, max_ips: int = 6, max_sessions: int = 4, max_requests: int = 5):
    """Small session list mixing valid requests with junk; every IP has >= 1 valid session."""
    from icstrace.ingest import RequestRecord, SessionRecord
    from icstrace.s7 import serialize_request

    sessions = []
    for i in range(rng.randint(1, max_ips)):
        ip = f"192.0.2.{i + 1}"
        for j in range(rng.randint(1, max_sessions)):
            requests = []
            for t in range(rng.randint(0 if j else 1, max_requests)):
                if j and rng.random() < 0.15:
                    payload = _JUNK
                else:
                    payload = serialize_request(*random_request(rng))
                requests.append(RequestRecord(1000 * j + t, payload.hex()))
            if j == 0 and not any(r.valid for r in requests):
                requests.append(RequestRecord(999, serialize_request(*random_request(rng)).hex()))
            sessions.append(SessionRecord(f"{ip}-{j:02d}", ip, "hp", requests))
    return sessions
