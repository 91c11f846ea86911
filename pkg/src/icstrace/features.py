"""Attack-pattern vectors from per-IP request sequences.

Per IP the vector is ``[mcfc, mcp, fcs_block, ps_block]`` where

* ``mcfc`` / ``mcp`` are the mean function-code / parameter counts per
  valid session (min-max scaled over the corpus when assembled),
* the blocks are short-sequence frequency distributions: each session's
  symbol stream is wrapped in start/end markers, cut into stride-1 windows
  of length 3, and the window multiset is normalized against a global,
  de-duplicated window vocabulary.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpus, NoValidSessions, UnknownWindow
from .ingest import IpProfile

logger = logging.getLogger(__name__)

START = "<S>"
END = "<E>"
NUL = "<NUL>"

Symbol = str
ShortSequence = tuple[Symbol, ...]


class SequenceKind(str, Enum):
    FCS = "FCS"
    PS = "PS"


def _check_valid(profile: IpProfile) -> list:
    sessions = profile.valid_sessions
    if not sessions:
        raise NoValidSessions(f"{profile.source_ip} has no valid session")
    return sessions


def mcfc(profile: IpProfile) -> float:
    """Mean count of function codes per valid session."""
    sessions = _check_valid(profile)
    return sum(sum(len(r.function_tokens) for r in s.valid_requests) for s in sessions) / len(sessions)


def mcp(profile: IpProfile) -> float:
    """Mean count of parameter tokens per valid session."""
    sessions = _check_valid(profile)
    return sum(sum(len(r.param_tokens) for r in s.valid_requests) for s in sessions) / len(sessions)


def session_sequences(profile: IpProfile, kind: SequenceKind | str) -> list[tuple[Symbol, ...]]:
    kind = SequenceKind(kind)
    rows = []
    for session in _check_valid(profile):
        if kind is SequenceKind.FCS:
            rows.append(tuple(t.symbol for r in session.valid_requests for t in r.function_tokens))
        else:
            rows.append(tuple(str(t) for r in session.valid_requests for t in r.param_tokens))
    return rows


def augment(seq: Sequence[Symbol], window: int = 3) -> tuple[Symbol, ...]:
    """Wrap in start/end markers; pad with NUL so at least one window fits."""
    body = tuple(seq) or (NUL,)
    short = window - 2 - len(body)
    if short > 0:
        body += (NUL,) * short
    return (START, *body, END)


def slide_windows(seq: Sequence[Symbol], window: int = 3, stride: int = 1) -> list[ShortSequence]:
    return [tuple(seq[i : i + window]) for i in range(0, len(seq) - window + 1, stride)]


def profile_windows(profile: IpProfile, kind, window: int = 3, stride: int = 1) -> Counter:
    counts: Counter = Counter()
    for seq in session_sequences(profile, kind):
        counts.update(slide_windows(augment(seq, window), window, stride))
    return counts


@dataclass(frozen=True)
class Vocabulary:
    kind: SequenceKind
    entries: tuple[ShortSequence, ...]
    index: dict[ShortSequence, int] = field(compare=False, repr=False)

    @classmethod
    def from_entries(cls, kind, entries: Iterable[ShortSequence]) -> "Vocabulary":
        ordered = tuple(sorted(set(entries)))
        return cls(SequenceKind(kind), ordered, {w: i for i, w in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def prefix(self) -> str:
        return "f" if self.kind is SequenceKind.FCS else "p"

    def ids(self) -> list[str]:
        return [f"{self.prefix}_{i}" for i in range(len(self.entries))]

    def write(self, path: str | Path, header: str | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if header:
                fh.write(f"# {header}\n")
            for wid, window in zip(self.ids(), self.entries):
                fh.write("\t".join((wid, *window)) + "\n")

    @classmethod
    def read(cls, path: str | Path, kind) -> "Vocabulary":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#") or not line.strip():
                    continue
                entries.append(tuple(line.rstrip("\n").split("\t")[1:]))
        return cls.from_entries(kind, entries)


def build_vocabulary(
    all_profiles: Iterable[IpProfile], kind, window: int = 3, stride: int = 1
) -> Vocabulary:
    """Union of every valid profile's windows, de-duplicated, sorted."""
    seen: set[ShortSequence] = set()
    n_valid = 0
    for profile in all_profiles:
        if not profile.valid:
            continue
        n_valid += 1
        seen.update(profile_windows(profile, kind, window, stride))
    if not n_valid:
        raise EmptyCorpus("no valid profile to build a vocabulary from")
    return Vocabulary.from_entries(kind, seen)


def vectorize_block(
    profile: IpProfile, vocab: Vocabulary, window: int = 3, stride: int = 1
) -> np.ndarray:
    counts = profile_windows(profile, vocab.kind, window, stride)
    vec = np.zeros(len(vocab))
    for w, n in counts.items():
        try:
            vec[vocab.index[w]] = n
        except KeyError:
            raise UnknownWindow(f"{profile.source_ip}: window {w} not in {vocab.kind.value} vocabulary") from None
    return vec / sum(counts.values())


@dataclass(frozen=True)
class ScalingConfig:
    weight_scalars: float = 1.0
    weight_fcs: float = 1.0
    weight_ps: float = 1.0
    window: int = 3
    stride: int = 1

    def __post_init__(self):
        if self.window < 3 or self.stride < 1:
            raise ValueError("window must be >= 3 and stride >= 1")


@dataclass(frozen=True)
class ScalarBounds:
    mcfc: tuple[float, float]
    mcp: tuple[float, float]


def min_max(value: float, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    # degenerate range: every IP shares the value -> 0 by convention
    if hi <= lo:
        return 0.0
    return (value - lo) / (hi - lo)


@dataclass(frozen=True)
class FeatureVector:
    ip: str
    mcfc: float
    mcp: float
    fcs_block: np.ndarray
    ps_block: np.ndarray
    assembled: np.ndarray


def assemble_vector(
    profile: IpProfile,
    vocabs: tuple[Vocabulary, Vocabulary],
    scaling: ScalingConfig,
    bounds: ScalarBounds,
) -> FeatureVector:
    fcs_vocab, ps_vocab = vocabs
    m_fc, m_p = mcfc(profile), mcp(profile)
    fcs = vectorize_block(profile, fcs_vocab, scaling.window, scaling.stride)
    ps = vectorize_block(profile, ps_vocab, scaling.window, scaling.stride)
    w = scaling.weight_scalars
    assembled = np.concatenate(
        [
            [w * min_max(m_fc, bounds.mcfc), w * min_max(m_p, bounds.mcp)],
            scaling.weight_fcs * fcs,
            scaling.weight_ps * ps,
        ]
    )
    return FeatureVector(profile.source_ip, m_fc, m_p, fcs, ps, assembled)


@dataclass
class FeatureMatrix:
    vectors: list[FeatureVector]
    vocabs: tuple[Vocabulary, Vocabulary]
    scaling: ScalingConfig

    @property
    def ips(self) -> list[str]:
        return [v.ip for v in self.vectors]

    @property
    def X(self) -> np.ndarray:
        width = 2 + len(self.vocabs[0]) + len(self.vocabs[1])
        if not self.vectors:
            return np.zeros((0, width))
        return np.vstack([v.assembled for v in self.vectors])

    def write_csv(self, path: str | Path, header: str | None = None) -> None:
        """``ip, mcfc, mcp, f_<id>..., p_<id>...`` with raw (unscaled) scalars."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ip", "mcfc", "mcp", *self.vocabs[0].ids(), *self.vocabs[1].ids()])
            for v in self.vectors:
                w.writerow([v.ip, repr(v.mcfc), repr(v.mcp), *map(repr, v.fcs_block.tolist()),
                            *map(repr, v.ps_block.tolist())])


def extract_features(profiles: Iterable[IpProfile], scaling: ScalingConfig | None = None) -> FeatureMatrix:
    """Vectorize every valid profile against corpus-wide vocabularies."""
    scaling = scaling or ScalingConfig()
    valid = [p for p in profiles if p.valid]
    if not valid:
        raise EmptyCorpus("corpus has no valid IP")
    vocabs = (
        build_vocabulary(valid, SequenceKind.FCS, scaling.window, scaling.stride),
        build_vocabulary(valid, SequenceKind.PS, scaling.window, scaling.stride),
    )
    m_fc = [mcfc(p) for p in valid]
    m_p = [mcp(p) for p in valid]
    bounds = ScalarBounds((min(m_fc), max(m_fc)), (min(m_p), max(m_p)))
    if bounds.mcfc[0] == bounds.mcfc[1]:
        logger.info("MCFC identical across the corpus; scaled to 0")
    vectors = [assemble_vector(p, vocabs, scaling, bounds) for p in valid]
    logger.info("features: %d IPs, k_FCS=%d, k_PS=%d", len(vectors), len(vocabs[0]), len(vocabs[1]))
    return FeatureMatrix(vectors, vocabs, scaling)
