"""End-to-end run: ingest -> features -> cluster -> metrics -> attribution.

Every file written declares the SHA-256 of the configuration that produced
it (a ``# config_sha256=...`` first line for text outputs, a key in
``run.json``).  Nothing time- or host-dependent is written, so rerunning a
config reproduces every output byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .attribution import (
    AuxInfo,
    ClusterLabel,
    Thresholds,
    label_clusters,
    load_auxiliary_map,
    load_org_domains,
    write_label_report,
)
from .clustering import INIT_VARIANTS, ClusterPartition, Dataset, KMeansOptions, SeedSet, partial_seeded_kmeans
from .errors import IcsTraceError, InvalidConfig, IoFailure, StageError
from .features import FeatureMatrix, ScalingConfig, extract_features
from .ingest import (
    COUNT_ROWS,
    assemble_ip_profiles,
    invalid_reasons,
    load_label_file,
    load_session_log,
    report_counts,
)
from .metrics import (
    MetricCurve,
    adjusted_mutual_information,
    adjusted_rand_index,
    calinski_harabasz_score,
    clusters_covering,
    k_sweep,
    recall_rate,
    silhouette_score,
)

logger = logging.getLogger(__name__)

SELECTION_METRICS = ("silhouette", "calinski_harabasz")
_PATH_FIELDS = ("sessions", "truth", "aux", "org_domains", "seeds")


@dataclass
class PipelineConfig:
    sessions: str
    out_dir: str = "out"
    truth: str | None = None
    aux: str | None = None
    org_domains: str | None = None
    seeds: str | None = None
    k: int | None = None
    k_range: tuple[int, int] | None = None
    selection_metric: str = "silhouette"
    init: str = "literal"
    tol: float = 1e-9
    max_iter: int = 300
    window: int = 3
    stride: int = 1
    weight_scalars: float = 1.0
    weight_fcs: float = 1.0
    weight_ps: float = 1.0
    min_support_count: int = 4
    geo_fraction: float = 0.5
    svg: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.k_range is not None:
            self.k_range = tuple(self.k_range)

    @property
    def sweep(self) -> bool:
        return self.k is None

    def validate(self, check_files: bool = True) -> None:
        if (self.k is None) == (self.k_range is None):
            raise InvalidConfig("give exactly one of k or k_range")
        if self.k is not None and self.k < 1:
            raise InvalidConfig(f"k must be positive, got {self.k}")
        if self.k_range is not None:
            if len(self.k_range) != 2 or not 2 <= self.k_range[0] <= self.k_range[1]:
                raise InvalidConfig(f"bad k_range {self.k_range}; need 2 <= A <= B")
        if self.init not in INIT_VARIANTS:
            raise InvalidConfig(f"init must be one of {INIT_VARIANTS}")
        if self.selection_metric not in SELECTION_METRICS:
            raise InvalidConfig(f"selection_metric must be one of {SELECTION_METRICS}")
        if self.tol < 0 or self.max_iter < 1:
            raise InvalidConfig("tol must be >= 0 and max_iter >= 1")
        try:
            self.scaling()
            self.thresholds()
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from exc
        if check_files:
            for name in _PATH_FIELDS:
                path = getattr(self, name)
                if path is not None and not Path(path).is_file():
                    raise InvalidConfig(f"{name}: no such file {path}")

    def scaling(self) -> ScalingConfig:
        return ScalingConfig(self.weight_scalars, self.weight_fcs, self.weight_ps, self.window, self.stride)

    def thresholds(self) -> Thresholds:
        return Thresholds(self.min_support_count, self.geo_fraction)

    def kmeans_options(self) -> KMeansOptions:
        return KMeansOptions(self.init, self.tol, self.max_iter)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["k_range"] = list(self.k_range) if self.k_range else None
        return out

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path | None = None) -> "PipelineConfig":
        """Relative paths are taken relative to ``base_dir`` (the config file's folder)."""
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        raw = dict(raw)
        if base_dir is not None:
            for name in (*_PATH_FIELDS, "out_dir"):
                if raw.get(name):
                    raw[name] = str(Path(base_dir) / raw[name])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise InvalidConfig(f"{path}: top level must be an object")
        return cls.from_dict(raw, Path(path).parent)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; the output folder does not count."""
        payload = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class RunReport:
    config: PipelineConfig
    config_sha256: str
    features: FeatureMatrix
    partition: ClusterPartition
    labels: list[ClusterLabel]
    counts: dict[str, int]
    metrics: dict[str, float]
    curves: dict[str, MetricCurve] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)


class _Stage:
    """Context manager re-raising anything inside as ``StageError(name)``."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, Exception):
            raise StageError(self.name, exc) from exc
        return False


def _sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _org_members(truth: dict[str, str], ips: list[str]) -> dict[str, list[str]]:
    present = set(ips)
    out: dict[str, list[str]] = {}
    for ip, org in truth.items():
        if ip in present:
            out.setdefault(org, []).append(ip)
    return {org: sorted(out[org]) for org in sorted(out)}


def _agreement(partition: ClusterPartition, reference: dict[str, str]) -> dict[str, float]:
    assignment = partition.assignment
    ips = [ip for ip in partition.ips if ip in reference]
    if len(ips) < 2:
        return {}
    true = [reference[ip] for ip in ips]
    pred = [assignment[ip] for ip in ips]
    return {"ari": adjusted_rand_index(true, pred), "ami": adjusted_mutual_information(true, pred)}


def _score_partition(
    X: np.ndarray, partition: ClusterPartition, seeds: SeedSet, truth: dict[str, str]
) -> dict[str, float]:
    out: dict[str, float] = {"sse": partition.sse}
    n_used = len(np.unique(partition.labels))
    if n_used >= 2:
        out["silhouette"] = silhouette_score(X, partition.labels)
        if n_used < len(X):
            out["calinski_harabasz"] = calinski_harabasz_score(X, partition.labels)
    for name, value in _agreement(partition, seeds.labels()).items():
        out[f"{name}_seeds"] = value
    if truth:
        for name, value in _agreement(partition, truth).items():
            out[f"{name}_truth"] = value
        orgs = _org_members(truth, partition.ips)
        for org, ips in orgs.items():
            out[f"recall:{org}"] = recall_rate(partition, ips)
        out["clusters_labeled"] = float(clusters_covering(partition, [ip for v in orgs.values() for ip in v]))
    return out


def run_pipeline(config: PipelineConfig) -> RunReport:
    """Run every stage and write all artifacts under ``config.out_dir``.

    Any failure surfaces as :class:`StageError` naming the stage.
    """
    with _Stage("config"):
        config.validate()
        digest = config.digest()
        header = f"config_sha256={digest}"

    with _Stage("ingest"):
        log = load_session_log(config.sessions)
        counts = report_counts(log.sessions)
        reasons = invalid_reasons(log.sessions)
        profiles = assemble_ip_profiles(log.sessions)
        truth = load_label_file(config.truth) if config.truth else {}
        seed_labels = load_label_file(config.seeds) if config.seeds else {}
        aux = load_auxiliary_map(config.aux) if config.aux else AuxInfo()
        org_domains = load_org_domains(config.org_domains) if config.org_domains else {}

    with _Stage("features"):
        features = extract_features(profiles, config.scaling())
        data = Dataset(features.ips, features.X)
        seeds = SeedSet.from_labels(seed_labels).restricted_to(data.ips)
        dropped = len(seed_labels) - len(seeds.members())
        if dropped:
            logger.warning("%d seed IP(s) have no valid session and were dropped", dropped)

    curves: dict[str, MetricCurve] = {}
    with _Stage("cluster"):
        options = config.kmeans_options()
        if config.sweep:
            lo, hi = config.k_range
            sweep = k_sweep(
                data,
                seeds,
                range(lo, hi + 1),
                metrics=("silhouette", "calinski_harabasz", "ari", "ami"),
                organizations=_org_members(truth, data.ips) or None,
                options=options,
            )
            curves = dict(sweep.curves)
            k = sweep.best_k(config.selection_metric)
            partition = sweep.partitions[k]
        else:
            sweep = None
            partition = partial_seeded_kmeans(data, seeds, config.k, options)

    with _Stage("metrics"):
        metrics = _score_partition(data.X, partition, seeds, truth)
        if sweep is not None and truth:
            for name in ("ari", "ami"):
                scores = tuple(
                    _agreement(sweep.partitions[kk], truth)[name] for kk in sorted(sweep.partitions)
                )
                curves[f"{name}_truth"] = MetricCurve(f"{name}_truth", tuple(sorted(sweep.partitions)), scores)

    with _Stage("attribution"):
        labels = label_clusters(partition, aux, config.thresholds(), org_domains)

    report = RunReport(config, digest, features, partition, labels, counts, metrics, curves)
    with _Stage("report"):
        _write_outputs(report, header, reasons, log, seeds, config)
    return report


def _write_outputs(report: RunReport, header: str, reasons: dict, log, seeds: SeedSet, config) -> None:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    def text(name: str) -> Path:
        written.append(name)
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    with open(text("counts.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "count"])
        for row in COUNT_ROWS:
            w.writerow([row, report.counts[row]])

    fm = report.features
    fm.write_csv(text("features.csv"), header)
    fm.vocabs[0].write(text("vocab_fcs.txt"), header)
    fm.vocabs[1].write(text("vocab_ps.txt"), header)

    part = report.partition
    with open(text("partition.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ip", "cluster_index"])
        for ip, c in zip(part.ips, part.labels.tolist()):
            w.writerow([ip, c])

    with open(text("means.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "mcfc", "mcp", *fm.vocabs[0].ids(), *fm.vocabs[1].ids()])
        for i, row in enumerate(part.means):
            w.writerow([i, *map(repr, row.tolist())])

    for name in sorted(report.curves):
        report.curves[name].write_csv(text(f"curves/{_safe_name(name)}.csv"), header)

    write_label_report(text("labels.csv"), report.labels, header)

    if config.svg and report.curves:
        _write_svg(text("curves.svg"), report.curves, report.partition.k, header)

    written.append("run.json")
    meta = {
        "config_sha256": report.config_sha256,
        "config": config.to_dict(),
        "version": __version__,
        "inputs": {
            name: _sha256_file(getattr(config, name))
            for name in _PATH_FIELDS
            if getattr(config, name) is not None
        },
        "counts": report.counts,
        "invalid_reasons": reasons,
        "malformed_lines": len(log.malformed),
        "n_ips": len(part.ips),
        "dimension": int(fm.X.shape[1]),
        "vocabulary": {"fcs": len(fm.vocabs[0]), "ps": len(fm.vocabs[1])},
        "mode": "sweep" if config.sweep else "single",
        "selected_by": config.selection_metric if config.sweep else None,
        "k": part.k,
        "l": seeds.l,
        "seed_organizations": seeds.names,
        "iterations": part.iterations,
        "converged": part.converged,
        "metrics": report.metrics,
        "labels": [
            {
                "cluster": lab.cluster_index,
                "ip_count": lab.ip_count,
                "label": lab.label,
                "evidence": lab.evidence.value,
                "support_count": lab.support_count,
                "support_fraction": lab.support_fraction,
            }
            for lab in report.labels
        ],
        "outputs": sorted(written),
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    report.outputs = sorted(written)


def _write_svg(path: Path, curves: dict[str, MetricCurve], chosen_k: int, header: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "icstrace"
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
    for name in ("silhouette", "ari", "ami", "ari_truth", "ami_truth"):
        if name in curves:
            top.plot(curves[name].k_values, curves[name].scores, marker=".", label=name)
    for name in sorted(n for n in curves if n.startswith("recall:")):
        bottom.plot(curves[name].k_values, curves[name].scores, marker=".", label=name[len("recall:"):])
    for ax in (top, bottom):
        ax.axvline(chosen_k, color="grey", linestyle=":")
        ax.set_ylim(-0.05, 1.05)
        if ax.lines[1:]:
            ax.legend(fontsize="small", loc="lower left")
    top.set_ylabel("score")
    bottom.set_ylabel("recall")
    bottom.set_xlabel("K")
    fig.suptitle(header, fontsize="x-small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_error_report(out_dir: str | Path, exc: BaseException) -> Path:
    """Machine-readable failure record: stage, error type, message."""
    stage = exc.stage if isinstance(exc, StageError) else "setup"
    cause = exc.cause if isinstance(exc, StageError) else exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "error.json"
    payload = {"stage": stage, "error": type(cause).__name__, "message": str(cause)}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def execute(config: PipelineConfig) -> int:
    """Run and translate the outcome into a process exit status."""
    try:
        report = run_pipeline(config)
    except (StageError, IcsTraceError) as exc:
        logger.error("%s", exc)
        try:
            write_error_report(config.out_dir, exc)
        except OSError as io_exc:
            logger.error("could not write error report: %s", io_exc)
        return 1
    stale = Path(config.out_dir) / "error.json"
    if stale.exists():
        stale.unlink()
    logger.info("k=%d, %d cluster label(s) written to %s", report.partition.k, len(report.labels), config.out_dir)
    return 0
