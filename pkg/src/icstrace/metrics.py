"""Clustering quality: agreement with known labels and internal indices."""

from __future__ import annotations

import csv
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .clustering import ClusterPartition, Dataset, KMeansOptions, SeedSet, pairwise_distances, partial_seeded_kmeans
from .errors import DegenerateK, EmptyOrganization, LengthMismatch, SingleCluster

logger = logging.getLogger(__name__)

# Calinski-Harabasz with zero within-cluster dispersion
MAX_SCORE = sys.float_info.max


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    classes: tuple
    clusters: tuple

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def contingency(labels_true: Sequence[Hashable], labels_pred: Sequence[Hashable]) -> ContingencyTable:
    labels_true, labels_pred = list(labels_true), list(labels_pred)
    if len(labels_true) != len(labels_pred):
        raise LengthMismatch(f"{len(labels_true)} true labels vs {len(labels_pred)} predicted")
    classes = tuple(sorted(set(labels_true), key=repr))
    clusters = tuple(sorted(set(labels_pred), key=repr))
    ci = {c: i for i, c in enumerate(classes)}
    kj = {c: j for j, c in enumerate(clusters)}
    counts = np.zeros((len(classes), len(clusters)), dtype=np.int64)
    for t, p in zip(labels_true, labels_pred):
        counts[ci[t], kj[p]] += 1
    return ContingencyTable(counts, classes, clusters)


def _check_pair(labels_true, labels_pred) -> ContingencyTable:
    table = contingency(labels_true, labels_pred)
    if table.total < 2:
        raise LengthMismatch("need at least 2 samples")
    return table


def _comb2(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2


def adjusted_rand_index(labels_true, labels_pred) -> float:
    """Hubert-Arabie adjusted Rand index.

    Identical trivial labelings (one class and one cluster, or all
    singletons on both sides) leave the index undefined; they score 1.0.
    """
    table = _check_pair(labels_true, labels_pred)
    index = _comb2(table.counts).sum()
    a = _comb2(table.row_sums).sum()
    b = _comb2(table.col_sums).sum()
    expected = a * b / _comb2(table.total)
    maximum = (a + b) / 2
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def _entropy(marginal: np.ndarray, n: int) -> float:
    p = marginal[marginal > 0] / n
    return float(-np.sum(p * np.log(p)))


def mutual_information(table: ContingencyTable) -> float:
    n = table.total
    nz = table.counts > 0
    nij = table.counts[nz].astype(float)
    outer = np.outer(table.row_sums, table.col_sums)[nz].astype(float)
    return float(np.sum(nij / n * (np.log(nij) + np.log(n) - np.log(outer))))


def expected_mutual_information(table: ContingencyTable) -> float:
    """Exact E[MI] under the hypergeometric model of random labelings."""
    n = table.total
    a = table.row_sums.astype(np.int64)
    b = table.col_sums.astype(np.int64)
    emi = 0.0
    lg_n = gammaln(n + 1)
    for ai in a:
        for bj in b:
            lo, hi = max(1, ai + bj - n), min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=float)
            log_p = (
                gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                - gammaln(n - ai - bj + nij + 1)
            )
            term = nij / n * (np.log(n * nij) - np.log(float(ai) * float(bj)))
            emi += float(np.sum(term * np.exp(log_p)))
    return emi


def adjusted_mutual_information(labels_true, labels_pred) -> float:
    """AMI with the arithmetic mean of the two entropies as normalizer.

    Both labelings trivial in the same way (single class and single
    cluster, or all singletons) is a perfect match: 1.0.
    """
    table = _check_pair(labels_true, labels_pred)
    n_classes, n_clusters = table.counts.shape
    n = table.total
    if (n_classes == n_clusters == 1) or (n_classes == n_clusters == n):
        return 1.0
    mi = mutual_information(table)
    emi = expected_mutual_information(table)
    normalizer = (_entropy(table.row_sums, n) + _entropy(table.col_sums, n)) / 2
    denominator = normalizer - emi
    eps = np.finfo(float).eps
    if abs(denominator) < eps:
        denominator = eps if denominator >= 0 else -eps
    return float((mi - emi) / denominator)


def _compact_labels(labels) -> tuple[np.ndarray, int]:
    _, inverse = np.unique(np.asarray(labels), return_inverse=True)
    return inverse.ravel(), int(inverse.max()) + 1 if len(inverse) else 0


def silhouette_score(X: np.ndarray, labels) -> float:
    """Mean silhouette; samples alone in their cluster score 0."""
    X = np.asarray(X, dtype=float)
    labels, k = _compact_labels(labels)
    if len(labels) != len(X):
        raise LengthMismatch(f"{len(X)} samples vs {len(labels)} labels")
    if k < 2:
        raise SingleCluster("silhouette needs at least 2 clusters")
    D = pairwise_distances(X, X)
    sizes = np.bincount(labels, minlength=k)
    # per-sample summed distance to every cluster
    sums = np.zeros((len(X), k))
    np.add.at(sums.T, labels, D)
    own = sizes[labels]
    a = np.where(own > 1, sums[np.arange(len(X)), labels] / np.maximum(own - 1, 1), 0.0)
    mean_to = sums / sizes[None, :]
    mean_to[np.arange(len(X)), labels] = np.inf
    b = mean_to.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def calinski_harabasz_score(X: np.ndarray, labels) -> float:
    X = np.asarray(X, dtype=float)
    labels, k = _compact_labels(labels)
    n = len(X)
    if len(labels) != n:
        raise LengthMismatch(f"{n} samples vs {len(labels)} labels")
    if not 2 <= k < n:
        raise DegenerateK(f"need 2 <= k < N, got k={k}, N={n}")
    centroid = X.mean(axis=0)
    between = within = 0.0
    for c in range(k):
        members = X[labels == c]
        mu = members.mean(axis=0)
        between += len(members) * float(np.sum((mu - centroid) ** 2))
        within += float(np.sum((members - mu) ** 2))
    if within == 0.0:
        return MAX_SCORE
    return (between / (k - 1)) / (within / (n - k))


calinski_harabaz_score = calinski_harabasz_score


def recall_rate(partition: ClusterPartition | Mapping[str, int], org_ips: Iterable[str]) -> float:
    """Largest fraction of an organization's IPs that share one cluster."""
    assignment = partition.assignment if isinstance(partition, ClusterPartition) else partition
    org_ips = set(org_ips)
    if not org_ips:
        raise EmptyOrganization("organization has no IP")
    missing = org_ips.difference(assignment)
    if missing:
        raise KeyError(f"{len(missing)} organization IPs not in the partition")
    counts = np.bincount([assignment[ip] for ip in org_ips])
    return float(counts.max() / len(org_ips))


def clusters_covering(partition: ClusterPartition, ips: Iterable[str]) -> int:
    """Number of distinct clusters holding at least one of ``ips``."""
    assignment = partition.assignment
    return len({assignment[ip] for ip in ips if ip in assignment})


@dataclass(frozen=True)
class MetricCurve:
    metric_name: str
    k_values: tuple[int, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.k_values) != len(self.scores):
            raise ValueError("k_values and scores differ in length")
        if any(b <= a for a, b in zip(self.k_values, self.k_values[1:])):
            raise ValueError("k_values must be strictly increasing")

    def best_k(self) -> int:
        """K with the highest score (lowest K on ties)."""
        return self.k_values[int(np.argmax(self.scores))]

    def at(self, k: int) -> float:
        return self.scores[self.k_values.index(k)]

    def write_csv(self, path: str | Path, header: str | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "score"])
            for k, s in zip(self.k_values, self.scores):
                w.writerow([k, repr(float(s))])


DEFAULT_METRICS = ("silhouette", "calinski_harabasz", "ari", "ami")


@dataclass
class SweepResult:
    curves: dict[str, MetricCurve]
    partitions: dict[int, ClusterPartition]

    def best_k(self, metric: str = "silhouette") -> int:
        return self.curves[metric].best_k()


def k_sweep(
    data: Dataset,
    seeds: SeedSet | None,
    k_range: Iterable[int],
    metrics: Sequence[str] = DEFAULT_METRICS,
    labels: Mapping[str, str] | None = None,
    organizations: Mapping[str, Iterable[str]] | None = None,
    options: KMeansOptions | None = None,
) -> SweepResult:
    """Cluster once per K and score every requested metric.

    ``ari``/``ami`` compare against ``labels`` restricted to the IPs they
    cover (the seed labels when ``labels`` is None).  ``organizations``
    adds one ``recall:<org>`` curve per organization and a
    ``clusters_labeled`` curve counting clusters that hold any of their IPs.
    """
    seeds = seeds or SeedSet()
    ks = sorted(set(k_range))
    lower = max(2, seeds.l)
    if not ks or ks[0] < lower or ks[-1] > len(data):
        raise ValueError(f"k range must lie within [{lower}, {len(data)}]")
    truth = dict(labels) if labels is not None else seeds.labels()
    truth_ips = [ip for ip in data.ips if ip in truth]
    organizations = {org: list(ips) for org, ips in (organizations or {}).items()}

    scores: dict[str, list[float]] = {}
    partitions = {}
    for k in ks:
        part = partial_seeded_kmeans(data, seeds, k, options)
        partitions[k] = part
        row = {}
        for m in metrics:
            if m == "silhouette":
                row[m] = silhouette_score(data.X, part.labels)
            elif m == "calinski_harabasz":
                row[m] = calinski_harabasz_score(data.X, part.labels)
            elif m in ("ari", "ami"):
                if len(truth_ips) < 2:
                    continue
                pred = [part.assignment[ip] for ip in truth_ips]
                true = [truth[ip] for ip in truth_ips]
                fn = adjusted_rand_index if m == "ari" else adjusted_mutual_information
                row[m] = fn(true, pred)
            else:
                raise ValueError(f"unknown metric {m!r}")
        for org, ips in organizations.items():
            row[f"recall:{org}"] = recall_rate(part, ips)
        if organizations:
            row["clusters_labeled"] = float(
                clusters_covering(part, [ip for ips in organizations.values() for ip in ips])
            )
        for name, value in row.items():
            scores.setdefault(name, []).append(value)
        logger.debug("k=%d %s", k, row)
    curves = {name: MetricCurve(name, tuple(ks), tuple(vals)) for name, vals in scores.items()}
    return SweepResult(curves, partitions)
