"""Synthetic labeled honeypot corpora.

Each organization owns one or more weighted attack scripts.  Every source
IP follows a single script (split by weight) in all of its sessions, and a
script realization varies through optional steps, repeat counts, parameter
alternatives and early disconnects.  A ``noise_rate`` fraction of requests
is replaced by bytes that can never classify as valid S7.
"""

from __future__ import annotations

import ipaddress
import math
import random
from dataclasses import asdict, dataclass, field

from .errors import InvalidConfig, UnsupportedFunction
from .ingest import RequestRecord, SessionRecord, ip_sort_key
from .s7 import FunctionToken, ParamToken, serialize_request

BASE_TIMESTAMP_MS = 1_483_228_800_000  # 2017-01-01T00:00:00Z
SPAN_MS = 272 * 24 * 3600 * 1000


@dataclass
class Step:
    function: str
    params: list[list[str]] = field(default_factory=lambda: [[]])
    p: float = 1.0
    repeat: tuple[int, int] = (1, 1)

    def __post_init__(self):
        self.repeat = tuple(self.repeat)
        if not self.params:
            self.params = [[]]


@dataclass
class AttackScript:
    name: str
    steps: list[Step]
    weight: float = 1.0


@dataclass
class OrgSpec:
    name: str
    scripts: list[AttackScript]
    network: str
    domain: str | None = None
    domain_kind: str = "static"
    country: str | None = None
    resolve_rate: float = 0.3


@dataclass
class SynthConfig:
    organizations: list[OrgSpec]
    ips_per_org: int = 150
    sessions_per_ip: tuple[int, int] = (4, 13)
    noise_rate: float = 0.05
    truncate_rate: float = 0.1
    honeypots: int = 13
    rng_seed: int = 0

    def __post_init__(self):
        self.sessions_per_ip = tuple(self.sessions_per_ip)

    def validate(self) -> None:
        if not self.organizations:
            raise InvalidConfig("at least one organization is required")
        if not 0 <= self.rng_seed < 2**64:
            raise InvalidConfig("rng_seed must be an unsigned 64-bit integer")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise InvalidConfig(f"noise_rate {self.noise_rate} outside [0, 1]")
        if not 0.0 <= self.truncate_rate <= 1.0:
            raise InvalidConfig(f"truncate_rate {self.truncate_rate} outside [0, 1]")
        lo, hi = self.sessions_per_ip
        if not 1 <= lo <= hi:
            raise InvalidConfig(f"bad sessions_per_ip range {self.sessions_per_ip}")
        if self.ips_per_org < 1 or self.honeypots < 1:
            raise InvalidConfig("ips_per_org and honeypots must be positive")
        names = [o.name for o in self.organizations]
        if len(set(names)) != len(names):
            raise InvalidConfig("organization names must be unique")
        nets = []
        for org in self.organizations:
            if not org.scripts:
                raise InvalidConfig(f"{org.name}: no attack scripts")
            total = sum(s.weight for s in org.scripts)
            if any(s.weight < 0 for s in org.scripts) or not math.isclose(total, 1.0, abs_tol=1e-9):
                raise InvalidConfig(f"{org.name}: script weights sum to {total}, expected 1")
            try:
                net = ipaddress.ip_network(org.network)
            except ValueError as exc:
                raise InvalidConfig(f"{org.name}: {exc}") from exc
            if net.num_addresses - 2 < self.ips_per_org:
                raise InvalidConfig(f"{org.name}: network {net} too small for {self.ips_per_org} IPs")
            if any(net.overlaps(other) for other in nets):
                raise InvalidConfig(f"{org.name}: network {net} overlaps another organization")
            nets.append(net)
            if org.domain_kind not in ("static", "dynamic"):
                raise InvalidConfig(f"{org.name}: domain_kind must be static or dynamic")
            if not 0.0 <= org.resolve_rate <= 1.0:
                raise InvalidConfig(f"{org.name}: resolve_rate outside [0, 1]")
            for script in org.scripts:
                if not script.steps:
                    raise InvalidConfig(f"{script.name}: empty script")
                for step in script.steps:
                    _check_step(script.name, step)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        try:
            orgs = [
                OrgSpec(
                    **{
                        **o,
                        "scripts": [
                            AttackScript(**{**s, "steps": [Step(**st) for st in s["steps"]]})
                            for s in o["scripts"]
                        ],
                    }
                )
                for o in raw["organizations"]
            ]
            return cls(**{**raw, "organizations": orgs})
        except (KeyError, TypeError) as exc:
            raise InvalidConfig(f"bad synth config: {exc}") from exc


def _check_step(script: str, step: Step) -> None:
    if not 0.0 <= step.p <= 1.0:
        raise InvalidConfig(f"{script}: step probability {step.p} outside [0, 1]")
    lo, hi = step.repeat
    if not 1 <= lo <= hi:
        raise InvalidConfig(f"{script}: bad repeat range {step.repeat}")
    try:
        token = FunctionToken.from_symbol(step.function)
        for alt in step.params:
            serialize_request(token, [ParamToken.parse(t) for t in alt])
    except (ValueError, UnsupportedFunction) as exc:
        raise InvalidConfig(f"{script}: step {step.function} {step.params}: {exc}") from exc


@dataclass
class SyntheticCorpus:
    sessions: list[SessionRecord]
    labels: dict[str, str]
    patterns: dict[str, str]


_JUNK = (b"GET / HTTP/1.1\r\nHost: plc\r\n\r\n", b"\x16\x03\x01\x00\xa5\x01\x00", b"\x00\x00\x00\x00")


def corrupt(payload: bytes, rng: random.Random) -> bytes:
    """Damage a well-formed request so it can never classify as valid."""
    mode = rng.randrange(4)
    if mode == 0:  # S7 magic at offset 7 (4 TPKT + 3 COTP)
        bad = rng.choice([b for b in range(256) if b != 0x32])
        return payload[:7] + bytes([bad]) + payload[8:]
    if mode == 1:
        return payload[: rng.randrange(len(payload))]
    if mode == 2:
        return bytes([rng.choice([0x00, 0x01, 0x02, 0x04, 0x16, 0x47])]) + payload[1:]
    return rng.choice(_JUNK)


def _realize(script: AttackScript, rng: random.Random, cache: dict) -> list[bytes]:
    out = []
    for step in script.steps:
        if rng.random() >= step.p:
            continue
        for _ in range(rng.randint(*step.repeat)):
            alt = rng.randrange(len(step.params))
            key = (step.function, tuple(step.params[alt]))
            if key not in cache:
                cache[key] = serialize_request(
                    FunctionToken.from_symbol(step.function),
                    [ParamToken.parse(t) for t in step.params[alt]],
                )
            out.append(cache[key])
    return out


def _script_quota(scripts: list[AttackScript], n: int) -> list[AttackScript]:
    """Exactly ``n`` scripts split by weight (largest remainder)."""
    raw = [s.weight * n for s in scripts]
    counts = [math.floor(r) for r in raw]
    by_remainder = sorted(range(len(scripts)), key=lambda i: (counts[i] - raw[i], i))
    for i in by_remainder[: n - sum(counts)]:
        counts[i] += 1
    return [s for s, c in zip(scripts, counts) for _ in range(c)]


def generate_synthetic_corpus(config: SynthConfig) -> SyntheticCorpus:
    """Deterministic corpus; same config (incl. ``rng_seed``) -> same bytes."""
    config.validate()
    rng = random.Random(config.rng_seed)
    cache: dict = {}
    sessions: list[SessionRecord] = []
    labels: dict[str, str] = {}
    patterns: dict[str, str] = {}
    counter = 0
    for org in config.organizations:
        net = ipaddress.ip_network(org.network)
        offsets = rng.sample(range(1, net.num_addresses - 1), config.ips_per_org)
        assigned = _script_quota(org.scripts, config.ips_per_org)
        rng.shuffle(assigned)
        for offset, script in zip(offsets, assigned):
            ip = str(net.network_address + offset)
            labels[ip] = org.name
            patterns[ip] = script.name
            for _ in range(rng.randint(*config.sessions_per_ip)):
                payloads = _realize(script, rng, cache)
                if len(payloads) > 1 and rng.random() < config.truncate_rate:
                    payloads = payloads[: rng.randint(1, len(payloads) - 1)]
                ts = BASE_TIMESTAMP_MS + rng.randrange(SPAN_MS)
                requests = []
                for payload in payloads:
                    if rng.random() < config.noise_rate:
                        payload = corrupt(payload, rng)
                    ts += rng.randint(20, 2000)
                    requests.append(RequestRecord(ts, payload.hex()))
                counter += 1
                sessions.append(
                    SessionRecord(
                        f"S{counter:07d}", ip, f"hp{rng.randrange(config.honeypots) + 1:02d}", requests
                    )
                )
    sessions.sort(key=lambda s: (ip_sort_key(s.source_ip), s.session_id))
    return SyntheticCorpus(sessions, labels, patterns)


_OTHER_COUNTRIES = (
    "United States", "Germany", "Netherlands", "Russia", "Japan", "Singapore", "Korea", "France", "United Kingdom",
    "China",
)


def synthetic_aux_rows(corpus: SyntheticCorpus, config: SynthConfig) -> list[dict]:
    """Offline stand-in for reverse DNS + geo lookup of every corpus IP."""
    rng = random.Random(f"aux-{config.rng_seed}")
    orgs = {o.name: o for o in config.organizations}
    rows = []
    for ip in sorted(corpus.labels, key=ip_sort_key):
        org = orgs[corpus.labels[ip]]
        domain, kind = "", "none"
        if org.domain and rng.random() < org.resolve_rate:
            domain, kind = f"scan-{rng.randrange(1000):03d}.{org.domain}", org.domain_kind
        country = org.country if org.country and rng.random() < 0.9 else rng.choice(_OTHER_COUNTRIES)
        rows.append({"ip": ip, "domain": domain, "domain_kind": kind, "country": country})
    return rows


# ---------------------------------------------------------------------------
# Built-in catalog
# ---------------------------------------------------------------------------


def _setup(ref: str, pdu_size: str) -> Step:
    return Step("F0", [[f"PDUREF:{ref}", "MAXAMQ_CALLER:0001", "MAXAMQ_CALLEE:0001", f"PDU_SIZE:{pdu_size}"]])


def _szl(*alternatives: str, p: float = 1.0) -> Step:
    alts = []
    for a in alternatives:
        szl_id, _, idx = a.partition("/")
        alts.append(["GRP:4", "SUB:1", f"SZL:{szl_id}"] + ([f"SZLIDX:{idx}"] if idx else []))
    return Step("00/4/1", alts, p=p)


def _read_clock(p: float = 1.0) -> Step:
    return Step("00/7/1", [["GRP:7", "SUB:1"]], p=p)


def default_organizations() -> list[OrgSpec]:
    """Six organizations; the first four mirror the known scanners of the corpus."""
    return [
        OrgSpec(
            "Shodan",
            [AttackScript("shodan-szl", [_setup("0000", "01E0"), _szl("0011"), _szl("001C")])],
            network="66.240.0.0/16", domain="shodan.io", country="United States",
        ),
        OrgSpec(
            "Censys",
            [
                AttackScript(
                    "censys-szl-clock",
                    [_setup("0100", "00F0"), _read_clock(), _szl("001C"), Step("00/7/4", [["GRP:7", "SUB:4"]])],
                )
            ],
            network="141.212.0.0/16", domain="eecs.umich.edu", country="United States",
        ),
        OrgSpec(
            "Ditecting",
            [
                AttackScript(
                    "ditecting-blocks",
                    [
                        _setup("0200", "01E0"),
                        Step("00/3/1", [["GRP:3", "SUB:1"]]),
                        Step(
                            "00/3/2",
                            [["GRP:3", "SUB:2", "BLOCKTYPE:38"], ["GRP:3", "SUB:2", "BLOCKTYPE:41"],
                             ["GRP:3", "SUB:2", "BLOCKTYPE:43"]],
                            repeat=(1, 3),
                        ),
                        Step("00/3/3", [["GRP:3", "SUB:3", "BLOCK:38/00001"]], p=0.6),
                    ],
                    weight=0.4,
                ),
                AttackScript(
                    "ditecting-read",
                    [
                        _setup("0200", "01E0"),
                        Step("04", [["ITEM:84/02/1/0/16"], ["ITEM:83/02/0/0/8"], ["ITEM:81/01/0/0/1"]],
                             repeat=(2, 4)),
                        _read_clock(p=0.7),
                    ],
                    weight=0.3,
                ),
                AttackScript(
                    "ditecting-diag",
                    [
                        _setup("0200", "03C0"),
                        Step("00/1/1", [["GRP:1", "SUB:1"]], repeat=(1, 2)),
                        Step("00/4/2", [["GRP:4", "SUB:2"]]),
                        Step("00/1/2", [["GRP:1", "SUB:2"]], p=0.8),
                    ],
                    weight=0.3,
                ),
            ],
            network="202.118.0.0/16", domain="neu.edu.cn", country="China",
        ),
        OrgSpec(
            "Beacon Lab",
            [
                AttackScript(
                    "beacon-upload",
                    [
                        _setup("0300", "01E0"),
                        _szl("001C"),
                        Step("00/5/1", [["GRP:5", "SUB:1", "PASSWORD"]], p=0.6),
                        Step("1D", [["FILE:_0A00001P"], ["FILE:_0800001P"]]),
                        Step("1E", repeat=(1, 2)),
                        Step("1F"),
                    ],
                )
            ],
            network="101.200.0.0/16", domain="plcscan.org", country="China",
        ),
        OrgSpec(
            "binaryedge.ninja",
            [
                AttackScript(
                    "binaryedge-rw",
                    [
                        _setup("0000", "0200"),
                        Step("04", [["ITEM:82/02/0/0/4"], ["ITEM:83/04/0/8/2"]], repeat=(1, 2)),
                        Step("05", [["ITEM:83/02/0/0/2", "DATA:04/2"]], p=0.3),
                        Step("28", [["PI:_INSE"], ["ARG:0000", "PI:P_PROGRAM"]], p=0.5),
                    ],
                )
            ],
            network="45.33.0.0/16", domain="binaryedge.ninja", domain_kind="dynamic", country="Netherlands",
        ),
        OrgSpec(
            "China Org",
            [
                AttackScript(
                    "cn-plcscan",
                    [_setup("0001", "00F0"), _szl("0011/0001"), _szl("0011/0006"), _read_clock(),
                     Step("29", [["PI:P_PROGRAM"]], p=0.2)],
                )
            ],
            network="61.160.0.0/16", country="China",
        ),
    ]


def default_config(
    n_orgs: int = 4,
    rng_seed: int = 0,
    ips_per_org: int = 150,
    sessions_per_ip: tuple[int, int] = (4, 13),
    noise_rate: float = 0.05,
) -> SynthConfig:
    catalog = default_organizations()
    if not 1 <= n_orgs <= len(catalog):
        raise InvalidConfig(f"n_orgs must be in 1..{len(catalog)}")
    return SynthConfig(
        organizations=catalog[:n_orgs],
        ips_per_org=ips_per_org,
        sessions_per_ip=sessions_per_ip,
        noise_rate=noise_rate,
        rng_seed=rng_seed,
    )
