"""Partial Seeded K-Means.

``l`` clusters start at the centroids of labeled seed groups; the other
``k - l`` starting means are picked one at a time from the unlabeled
samples by a farthest-point score against the means chosen so far.  Lloyd
iterations then run over all ``k`` means with no constraint on seed
membership, so a seed sample may end up outside its seed cluster.

Two scores for picking the next mean are available:

* ``literal`` (default): mean distance to the current means plus the
  minimum distance to them;
* ``maxmin``: the minimum distance only (classic farthest-first).

Ties anywhere resolve to the lowest index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    DimensionMismatch,
    EmptySeedGroup,
    InsufficientSamples,
    InvalidSeeds,
)

logger = logging.getLogger(__name__)

INIT_VARIANTS = ("literal", "maxmin")


def euclidean_distance(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    return float(np.sqrt(np.sum((x - y) ** 2)))


def pairwise_distances(X: np.ndarray, means: np.ndarray) -> np.ndarray:
    """(n, k) matrix of Euclidean distances."""
    return cdist(X, means)


@dataclass
class Dataset:
    ips: list[str]
    X: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2 or self.X.shape[0] != len(self.ips):
            raise DimensionMismatch(f"{len(self.ips)} ips vs matrix of shape {self.X.shape}")
        if len(set(self.ips)) != len(self.ips):
            raise ValueError("duplicate ip keys in dataset")
        self._pos = {ip: i for i, ip in enumerate(self.ips)}

    def __len__(self) -> int:
        return len(self.ips)

    def position(self, ip: str) -> int:
        return self._pos[ip]

    @classmethod
    def from_points(cls, points) -> "Dataset":
        X = np.asarray(points, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return cls([str(i) for i in range(len(X))], X)


@dataclass
class SeedSet:
    """``l`` disjoint labeled groups; group ``i`` seeds cluster ``i``."""

    groups: list[tuple[str, list[str]]] = field(default_factory=list)

    def __post_init__(self):
        seen: set[str] = set()
        for org, ips in self.groups:
            if not ips:
                raise EmptySeedGroup(f"seed group {org!r} is empty")
            overlap = seen.intersection(ips)
            if overlap:
                raise InvalidSeeds(f"seed groups overlap on {sorted(overlap)[:3]}")
            seen.update(ips)

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.groups)

    @property
    def names(self) -> list[str]:
        return [org for org, _ in self.groups]

    def members(self) -> set[str]:
        return {ip for _, ips in self.groups for ip in ips}

    def labels(self) -> dict[str, str]:
        return {ip: org for org, ips in self.groups for ip in ips}

    @classmethod
    def from_labels(cls, labels: Mapping[str, str]) -> "SeedSet":
        by_org: dict[str, list[str]] = {}
        for ip, org in labels.items():
            by_org.setdefault(org, []).append(ip)
        return cls([(org, by_org[org]) for org in sorted(by_org)])

    def restricted_to(self, ips: Iterable[str]) -> "SeedSet":
        keep = set(ips)
        groups = [(org, [ip for ip in members if ip in keep]) for org, members in self.groups]
        return SeedSet([(org, members) for org, members in groups if members])


def seed_means(data: Dataset, seeds: SeedSet) -> np.ndarray:
    means = []
    for org, ips in seeds.groups:
        if not ips:
            raise EmptySeedGroup(f"seed group {org!r} is empty")
        try:
            rows = [data.position(ip) for ip in ips]
        except KeyError as exc:
            raise InvalidSeeds(f"seed ip {exc.args[0]} not in dataset") from None
        means.append(data.X[rows].mean(axis=0))
    return np.array(means).reshape(len(means), data.X.shape[1])


def _init_score(dist: np.ndarray, variant: str) -> np.ndarray:
    if variant == "literal":
        return dist.mean(axis=1) + dist.min(axis=1)
    if variant == "maxmin":
        return dist.min(axis=1)
    raise ValueError(f"unknown init variant {variant!r}; choose from {INIT_VARIANTS}")


def farthest_point_init(
    X: np.ndarray,
    known_means: np.ndarray,
    k: int,
    candidates: Sequence[int] | None = None,
    variant: str = "literal",
) -> tuple[np.ndarray, list[int]]:
    """Extend ``known_means`` to ``k`` means by repeated farthest-point picks.

    Returns the ``(k, d)`` means and the sample indices that were picked.
    Picked samples stay in the data set; they only stop being candidates.
    With no known mean at all, the first pick is the sample farthest from
    the data centroid.
    """
    X = np.asarray(X, dtype=float)
    means = np.asarray(known_means, dtype=float).reshape(-1, X.shape[1])
    l = len(means)
    if k < l:
        raise ValueError(f"k={k} smaller than the {l} known means")
    pool = list(range(len(X))) if candidates is None else sorted(candidates)
    if len(pool) < k - l:
        raise InsufficientSamples(f"need {k - l} unseeded samples, have {len(pool)}")
    _init_score(np.zeros((1, 1)), variant)
    picked: list[int] = []
    available = np.array(pool, dtype=int)
    while len(means) < k:
        if len(means) == 0:
            ref = X.mean(axis=0, keepdims=True)
            score = pairwise_distances(X[available], ref)[:, 0]
        else:
            score = _init_score(pairwise_distances(X[available], means), variant)
        best = int(np.argmax(score))
        idx = int(available[best])
        picked.append(idx)
        means = np.vstack([means, X[idx]])
        available = np.delete(available, best)
    return means, picked


def assign_step(X: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Nearest mean among all k for every sample; ties -> lowest index."""
    return np.argmin(pairwise_distances(X, means), axis=1)


def sse(X: np.ndarray, labels: np.ndarray, means: np.ndarray) -> float:
    return float(np.sum((X - means[labels]) ** 2))


def repair_empty(X: np.ndarray, labels: np.ndarray, means: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Move each empty cluster's mean onto the sample farthest from its nearest mean."""
    means = means.copy()
    counts = np.bincount(labels, minlength=len(means))
    repaired = []
    for j in np.flatnonzero(counts == 0):
        nearest = pairwise_distances(X, means).min(axis=1)
        i = int(np.argmax(nearest))
        means[j] = X[i]
        repaired.append(int(j))
    return means, repaired


def update_step(
    X: np.ndarray, labels: np.ndarray, means: np.ndarray, tol: float = 1e-9
) -> tuple[np.ndarray, bool]:
    """Recompute centroids; empty clusters are reseeded.

    ``changed`` is True when any mean moved by more than ``tol``.
    """
    k = len(means)
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(means)
    np.add.at(sums, labels, X)
    new = means.copy()
    nonempty = counts > 0
    new[nonempty] = sums[nonempty] / counts[nonempty, None]
    if not nonempty.all():
        new, _ = repair_empty(X, labels, new)
    moved = np.sqrt(np.sum((new - means) ** 2, axis=1))
    return new, bool(np.any(moved > tol))


@dataclass(frozen=True)
class KMeansOptions:
    init: str = "literal"
    tol: float = 1e-9
    max_iter: int = 300

    def __post_init__(self):
        if self.init not in INIT_VARIANTS:
            raise ValueError(f"init must be one of {INIT_VARIANTS}")


@dataclass
class ClusterPartition:
    ips: list[str]
    k: int
    means: np.ndarray
    labels: np.ndarray
    iterations: int
    converged: bool
    initial_means: np.ndarray
    sse_history: list[float]
    seed_names: list[str] = field(default_factory=list)

    @property
    def sse(self) -> float:
        return self.sse_history[-1] if self.sse_history else float("nan")

    @property
    def assignment(self) -> dict[str, int]:
        return dict(zip(self.ips, self.labels.tolist()))

    def clusters(self) -> list[list[str]]:
        out: list[list[str]] = [[] for _ in range(self.k)]
        for ip, c in zip(self.ips, self.labels.tolist()):
            out[c].append(ip)
        return out


def partial_seeded_kmeans(
    data: Dataset,
    seeds: SeedSet | None = None,
    k: int = 2,
    options: KMeansOptions | None = None,
) -> ClusterPartition:
    options = options or KMeansOptions()
    seeds = seeds or SeedSet()
    n = len(data)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    if seeds.l > k:
        raise ValueError(f"{seeds.l} seed groups exceed k={k}")
    X = data.X
    known = seed_means(data, seeds)
    seeded = {data.position(ip) for ip in seeds.members()}
    candidates = [i for i in range(n) if i not in seeded]
    means, _ = farthest_point_init(X, known, k, candidates, options.init)
    initial = means.copy()

    history: list[float] = []
    converged = False
    iterations = 0
    labels = assign_step(X, means)
    while iterations < options.max_iter:
        iterations += 1
        means, changed = update_step(X, labels, means, options.tol)
        history.append(sse(X, labels, means))
        if not changed:
            converged = True
            break
        labels = assign_step(X, means)
    if not converged:
        logger.warning("k=%d: iteration cap %d reached without convergence", k, options.max_iter)
    return ClusterPartition(
        ips=list(data.ips), k=k, means=means, labels=labels, iterations=iterations,
        converged=converged, initial_means=initial, sse_history=history, seed_names=seeds.names,
    )
