"""Session-log data model: request -> session -> source IP.

Session log format (JSON lines, UTF-8, one TCP session per line)::

    {"session_id": "...", "source_ip": "198.51.100.7", "honeypot_id": "hp03",
     "requests": [{"ts": 1483228800000, "payload_hex": "0300..."}, ...]}

Validity is always recomputed from the payload bytes; any ``valid`` field
present in the file is ignored.
"""

from __future__ import annotations

import csv
import ipaddress
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

from .errors import IoFailure, ProtocolError
from .s7 import (
    Classification,
    FunctionToken,
    ParamToken,
    classify_payload,
    extract_function_token,
    extract_parameter_tokens,
)

logger = logging.getLogger(__name__)


def _function_token(pdu) -> FunctionToken:
    try:
        return extract_function_token(pdu)
    except ProtocolError:
        # system function too short to carry group/subfunction
        return FunctionToken(pdu.parameters[0])


def ip_sort_key(ip: str) -> tuple[int, int]:
    addr = ipaddress.ip_address(ip)
    return addr.version, int(addr)


@dataclass
class RequestRecord:
    timestamp: int
    payload_hex: str

    @cached_property
    def classification(self) -> Classification:
        try:
            raw = bytes.fromhex(self.payload_hex)
        except ValueError:
            return Classification(False, "bad_hex")
        return classify_payload(raw)

    @property
    def valid(self) -> bool:
        return self.classification.valid

    @property
    def reason(self) -> str:
        return self.classification.reason

    @cached_property
    def function_tokens(self) -> tuple[FunctionToken, ...]:
        return tuple(_function_token(p) for p in self.classification.pdus if p.parameters)

    @cached_property
    def param_tokens(self) -> tuple[ParamToken, ...]:
        return tuple(t for p in self.classification.pdus for t in extract_parameter_tokens(p))

    def to_json(self) -> dict:
        return {"ts": self.timestamp, "payload_hex": self.payload_hex}


@dataclass
class SessionRecord:
    session_id: str
    source_ip: str
    honeypot_id: str
    requests: list[RequestRecord] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return any(r.valid for r in self.requests)

    @property
    def valid_requests(self) -> list[RequestRecord]:
        return [r for r in self.requests if r.valid]

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "source_ip": self.source_ip,
            "honeypot_id": self.honeypot_id,
            "requests": [r.to_json() for r in self.requests],
        }


@dataclass
class IpProfile:
    source_ip: str
    sessions: list[SessionRecord] = field(default_factory=list)
    organization_label: str | None = None

    @property
    def valid_sessions(self) -> list[SessionRecord]:
        return [s for s in self.sessions if s.valid]

    @property
    def valid(self) -> bool:
        return any(s.valid for s in self.sessions)


@dataclass(frozen=True)
class MalformedLine:
    line_number: int
    reason: str


@dataclass
class SessionLog:
    sessions: list[SessionRecord]
    malformed: list[MalformedLine] = field(default_factory=list)


def _decode_session(obj) -> SessionRecord:
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    source_ip = str(obj["source_ip"])
    ipaddress.ip_address(source_ip)
    requests = []
    for item in obj["requests"]:
        ts = item["ts"]
        if not isinstance(ts, int) or isinstance(ts, bool):
            raise ValueError("ts must be an integer (UTC milliseconds)")
        payload_hex = item["payload_hex"]
        if not isinstance(payload_hex, str):
            raise ValueError("payload_hex must be a string")
        requests.append(RequestRecord(ts, payload_hex))
    requests.sort(key=lambda r: r.timestamp)
    return SessionRecord(str(obj["session_id"]), source_ip, str(obj["honeypot_id"]), requests)


def load_session_log(path: str | Path) -> SessionLog:
    """Read a JSON-lines session log; corrupt lines are skipped and reported."""
    sessions: list[SessionRecord] = []
    malformed: list[MalformedLine] = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    sessions.append(_decode_session(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    malformed.append(MalformedLine(lineno, f"{type(exc).__name__}: {exc}"))
    except OSError as exc:
        raise IoFailure(f"cannot read session log {path}: {exc}") from exc
    if malformed:
        logger.warning("%s: skipped %d malformed line(s)", path, len(malformed))
    return SessionLog(sessions, malformed)


def write_session_log(path: str | Path, sessions: Iterable[SessionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sessions:
            fh.write(json.dumps(s.to_json(), separators=(",", ":")) + "\n")


def assemble_ip_profiles(sessions: Iterable[SessionRecord]) -> list[IpProfile]:
    """Group sessions by source IP.

    Profiles come back sorted by address, sessions by id; profiles with no
    valid session are kept (``profile.valid`` is False) so that counters can
    still see them.
    """
    by_ip: dict[str, list[SessionRecord]] = defaultdict(list)
    for s in sessions:
        by_ip[s.source_ip].append(s)
    return [
        IpProfile(ip, sorted(by_ip[ip], key=lambda s: s.session_id))
        for ip in sorted(by_ip, key=ip_sort_key)
    ]


COUNT_ROWS = ("Request", "Valid request", "Session", "Valid session", "IP address", "Valid IP address")


def report_counts(sessions: Iterable[SessionRecord]) -> dict[str, int]:
    """Request/session/IP totals next to their valid subsets."""
    sessions = list(sessions)
    requests = [r for s in sessions for r in s.requests]
    profiles = assemble_ip_profiles(sessions)
    values = (
        len(requests),
        sum(r.valid for r in requests),
        len(sessions),
        sum(s.valid for s in sessions),
        len(profiles),
        sum(p.valid for p in profiles),
    )
    return dict(zip(COUNT_ROWS, values))


def invalid_reasons(sessions: Iterable[SessionRecord]) -> dict[str, int]:
    counts: dict[str, int] = defaultdict(int)
    for s in sessions:
        for r in s.requests:
            if not r.valid:
                counts[r.reason] += 1
    return dict(sorted(counts.items()))


def load_label_file(path: str | Path) -> dict[str, str]:
    """Two-column ``ip,organization`` text (ground-truth sidecar or seeds)."""
    labels: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                ip = row[0].strip()
                if ip.lower() == "ip":
                    continue
                if len(row) < 2 or not row[1].strip():
                    logger.warning("%s: skipping row without organization: %r", path, row)
                    continue
                try:
                    ipaddress.ip_address(ip)
                except ValueError:
                    logger.warning("%s: skipping row with bad ip %r", path, ip)
                    continue
                labels[ip] = row[1].strip()
    except OSError as exc:
        raise IoFailure(f"cannot read label file {path}: {exc}") from exc
    return labels


def write_label_file(path: str | Path, labels: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ip", "organization"])
        for ip in sorted(labels, key=ip_sort_key):
            w.writerow([ip, labels[ip]])
