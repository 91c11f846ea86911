"""Name clusters after organizations using auxiliary per-IP metadata.

The auxiliary map is an offline stand-in for reverse DNS and geo-IP
lookups: ``ip,domain,domain_kind,country[,region]`` rows.  Per cluster the
label comes from, in order of priority, the most common static domain, the
most common dynamic domain (each needing ``min_support_count`` IPs), or the
most common country when it covers at least ``geo_fraction`` of the
cluster.  Anything else is ``Unknown``.
"""

from __future__ import annotations

import csv
import ipaddress
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import tldextract

from .clustering import ClusterPartition
from .errors import IoFailure

logger = logging.getLogger(__name__)

UNKNOWN_LABEL = "Unknown"
DOMAIN_KINDS = ("static", "dynamic", "none")


class Evidence(str, Enum):
    STATIC_DOMAIN = "static_domain"
    DYNAMIC_DOMAIN = "dynamic_domain"
    GEOGRAPHY = "geography"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class AuxEntry:
    domain: str | None = None
    domain_kind: str = "none"
    country: str | None = None
    region: str | None = None


@dataclass
class AuxInfo:
    entries: dict[str, AuxEntry] = field(default_factory=dict)
    malformed_rows: int = 0
    duplicate_rows: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, ip: str) -> AuxEntry | None:
        return self.entries.get(ip)


def _parse_aux_row(row: list[str]) -> tuple[str, AuxEntry]:
    cells = [c.strip() for c in row]
    if len(cells) < 2:
        raise ValueError("need at least ip and domain columns")
    ip = str(ipaddress.ip_address(cells[0]))
    cells += [""] * (5 - len(cells))
    domain, kind, country, region = cells[1:5]
    kind = kind.lower()
    if not domain:
        kind = "none"
    elif not kind or kind == "none":
        kind = "static"
    if kind not in DOMAIN_KINDS:
        raise ValueError(f"unknown domain_kind {kind!r}")
    return ip, AuxEntry(domain.lower().rstrip(".") or None, kind, country or None, region or None)


def load_auxiliary_map(path: str | Path) -> AuxInfo:
    """Read the aux CSV; bad rows are skipped, duplicate IPs keep the last row."""
    aux = AuxInfo()
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                    continue
                if lineno == 1 and row[0].strip().lower() == "ip":
                    continue
                try:
                    ip, entry = _parse_aux_row(row)
                except ValueError as exc:
                    aux.malformed_rows += 1
                    logger.debug("%s:%d: %s", path, lineno, exc)
                    continue
                if ip in aux.entries:
                    aux.duplicate_rows += 1
                aux.entries[ip] = entry
    except OSError as exc:
        raise IoFailure(f"cannot read aux map {path}: {exc}") from exc
    if aux.malformed_rows:
        logger.warning("%s: skipped %d malformed row(s)", path, aux.malformed_rows)
    if aux.duplicate_rows:
        logger.warning("%s: %d duplicate ip row(s), last one kept", path, aux.duplicate_rows)
    return aux


def write_auxiliary_map(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ip", "domain", "domain_kind", "country"])
        for r in rows:
            w.writerow([r["ip"], r.get("domain") or "", r.get("domain_kind") or "none", r.get("country") or ""])


def load_org_domains(path: str | Path) -> dict[str, str]:
    """``domain,organization`` rows naming the owner of a domain suffix."""
    out: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if len(row) < 2 or row[0].lstrip().startswith("#") or row[0].strip().lower() == "domain":
                    continue
                if row[0].strip() and row[1].strip():
                    out[row[0].strip().lower().rstrip(".")] = row[1].strip()
    except OSError as exc:
        raise IoFailure(f"cannot read org domain map {path}: {exc}") from exc
    return out


def write_org_domains(path: str | Path, org_domains: Mapping[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "organization"])
        for domain in sorted(org_domains):
            w.writerow([domain, org_domains[domain]])


@lru_cache(maxsize=1)
def _extractor() -> tldextract.TLDExtract:
    # bundled public-suffix snapshot only; never touches the network
    return tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None)


def registrable_domain(host: str) -> str:
    """``scan-7.eecs.umich.edu`` -> ``umich.edu``; falls back to the host."""
    return _extractor()(host).top_domain_under_public_suffix or host


def domain_key(host: str, org_domains: Mapping[str, str] | None = None) -> str:
    """Longest known organization suffix of ``host``, else its registrable domain."""
    if org_domains:
        labels = host.split(".")
        for i in range(len(labels)):
            suffix = ".".join(labels[i:])
            if suffix in org_domains:
                return suffix
    return registrable_domain(host)


@dataclass(frozen=True)
class Thresholds:
    min_support_count: int = 4
    geo_fraction: float = 0.5

    def __post_init__(self):
        if self.min_support_count < 1:
            raise ValueError("min_support_count must be >= 1")
        if not 0.0 < self.geo_fraction <= 1.0:
            raise ValueError("geo_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class ClusterLabel:
    cluster_index: int
    ip_count: int
    label: str
    evidence: Evidence
    support_count: int
    support_fraction: float


def _most_common(counter: Counter) -> tuple[str, int]:
    # highest count, then lexicographically smallest key
    return min(counter.items(), key=lambda kv: (-kv[1], kv[0]))


def label_cluster(
    index: int,
    ips: list[str],
    aux: AuxInfo,
    thresholds: Thresholds,
    org_domains: Mapping[str, str] | None = None,
) -> ClusterLabel:
    n = len(ips)
    entries = [e for e in (aux.get(ip) for ip in ips) if e is not None]
    for kind, evidence in (("static", Evidence.STATIC_DOMAIN), ("dynamic", Evidence.DYNAMIC_DOMAIN)):
        keys = Counter(domain_key(e.domain, org_domains) for e in entries if e.domain_kind == kind and e.domain)
        if keys:
            key, count = _most_common(keys)
            if count >= thresholds.min_support_count:
                name = (org_domains or {}).get(key, key)
                return ClusterLabel(index, n, name, evidence, count, count / n)
    countries = Counter(e.country for e in entries if e.country)
    if countries and n:
        country, count = _most_common(countries)
        if count / n >= thresholds.geo_fraction:
            return ClusterLabel(index, n, f"{country} Org", Evidence.GEOGRAPHY, count, count / n)
    # support of an unlabeled cluster is the cluster itself
    return ClusterLabel(index, n, UNKNOWN_LABEL, Evidence.UNLABELED, n, 1.0)


def label_clusters(
    partition: ClusterPartition,
    aux: AuxInfo,
    thresholds: Thresholds | None = None,
    org_domains: Mapping[str, str] | None = None,
) -> list[ClusterLabel]:
    """One label per cluster, in cluster-index order; labels may repeat."""
    thresholds = thresholds or Thresholds()
    return [
        label_cluster(i, ips, aux, thresholds, org_domains)
        for i, ips in enumerate(partition.clusters())
    ]


def write_label_report(path: str | Path, labels: list[ClusterLabel], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "ip_count", "label", "evidence", "support"])
        for lab in labels:
            w.writerow([lab.cluster_index, lab.ip_count, lab.label, lab.evidence.value, lab.support_count])
