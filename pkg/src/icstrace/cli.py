"""``icstrace`` command line: synth, run, sweep, report.

Options come from ``--config`` (JSON) first; command-line flags override
them.  ``ICSTRACE_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import random
import sys
from pathlib import Path

from .attribution import write_auxiliary_map, write_org_domains
from .clustering import INIT_VARIANTS
from .errors import IcsTraceError, InvalidConfig
from .ingest import (
    COUNT_ROWS,
    invalid_reasons,
    ip_sort_key,
    load_session_log,
    report_counts,
    write_label_file,
    write_session_log,
)
from .pipeline import PipelineConfig, execute, write_error_report
from .synth import SynthConfig, default_config, generate_synthetic_corpus, synthetic_aux_rows

logger = logging.getLogger("icstrace")

DEFAULT_K_RANGE = (2, 30)


def parse_k(text: str) -> int | tuple[int, int]:
    """``"6"`` -> 6, ``"2..30"`` -> (2, 30)."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if not 1 <= lo <= hi:
                raise ValueError
            return lo, hi
        k = int(text)
        if k < 1:
            raise ValueError
        return k
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected INT or A..B, got {text!r}") from None


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON pipeline config; flags below override it")
    p.add_argument("--input", help="session log (JSON lines)")
    p.add_argument("--aux", help="aux map CSV: ip,domain,domain_kind,country")
    p.add_argument("--seeds", help="seed labels CSV: ip,organization")
    p.add_argument("--truth", help="ground-truth labels CSV: ip,organization")
    p.add_argument("--org-domains", help="domain,organization CSV naming domain owners")
    p.add_argument("--k", type=parse_k, help="cluster count INT, or sweep range A..B")
    p.add_argument("--init", choices=INIT_VARIANTS, help="farthest-point score for unseeded means")
    p.add_argument("--out", help="output directory")
    p.add_argument("--svg", action="store_true", default=None, help="also write curves.svg")
    p.add_argument("--rng-seed", type=int, help="recorded in the config (clustering itself is deterministic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icstrace", description="Cluster S7comm honeypot attackers by attack pattern and name their organizations."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="write a labeled synthetic corpus plus a ready-to-run config")
    synth.add_argument("--config", help="full synthetic-corpus config (JSON)")
    synth.add_argument("--orgs", type=int, default=4, help="organizations taken from the built-in catalog")
    synth.add_argument("--seed", "--rng-seed", dest="seed", type=int, help="generator seed")
    synth.add_argument("--ips-per-org", type=int)
    synth.add_argument("--seed-orgs", type=int, default=2, help="organizations contributing seed IPs")
    synth.add_argument("--seeds-per-org", type=int, default=30)
    synth.add_argument("--out", default="synthetic", help="output directory")

    run = sub.add_parser("run", help="cluster at one K (or pick K from a range) and label the clusters")
    _add_pipeline_flags(run)
    sweep = sub.add_parser("sweep", help="cluster for every K in a range and write metric curves")
    _add_pipeline_flags(sweep)

    report = sub.add_parser("report", help="request/session/IP validity counts of a session log")
    report.add_argument("--input", required=True, help="session log (JSON lines)")
    report.add_argument("--out", help="also write counts.csv here")
    return parser


def _pipeline_config(args, sweep: bool) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.load(args.config)
    else:
        if not args.input:
            raise InvalidConfig("--input is required without --config")
        config = PipelineConfig(sessions=args.input)
    overrides = {
        "sessions": args.input,
        "aux": args.aux,
        "seeds": args.seeds,
        "truth": args.truth,
        "org_domains": args.org_domains,
        "init": args.init,
        "out_dir": args.out,
        "svg": args.svg,
        "rng_seed": args.rng_seed,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    if isinstance(args.k, tuple):
        config.k, config.k_range = None, args.k
    elif args.k is not None:
        if sweep:
            raise InvalidConfig("sweep needs a range, e.g. --k 2..30")
        config.k, config.k_range = args.k, None
    if sweep and config.k_range is None:
        config.k, config.k_range = None, DEFAULT_K_RANGE
    return config


def cmd_pipeline(args, sweep: bool) -> int:
    try:
        config = _pipeline_config(args, sweep)
    except IcsTraceError as exc:
        logger.error("%s", exc)
        if args.out:
            write_error_report(args.out, exc)
        return 1
    return execute(config)


def cmd_synth(args) -> int:
    if args.config:
        try:
            config = SynthConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot load synth config {args.config}: {exc}") from exc
    else:
        config = default_config(args.orgs)
    if args.seed is not None:
        config.rng_seed = args.seed
    if args.ips_per_org is not None:
        config.ips_per_org = args.ips_per_org
    corpus = generate_synthetic_corpus(config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_session_log(out / "sessions.jsonl", corpus.sessions)
    write_label_file(out / "truth.csv", corpus.labels)

    rng = random.Random(f"seeds-{config.rng_seed}")
    seed_labels = {}
    for org in config.organizations[: args.seed_orgs]:
        members = sorted(ip for ip, name in corpus.labels.items() if name == org.name)
        for ip in rng.sample(members, min(args.seeds_per_org, len(members))):
            seed_labels[ip] = org.name
    write_label_file(out / "seeds.csv", seed_labels)
    write_auxiliary_map(out / "aux.csv", synthetic_aux_rows(corpus, config))
    write_org_domains(out / "org_domains.csv", {o.domain: o.name for o in config.organizations if o.domain})
    with open(out / "patterns.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ip", "script"])
        for ip in sorted(corpus.patterns, key=ip_sort_key):
            w.writerow([ip, corpus.patterns[ip]])
    (out / "synth.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    run_cfg = PipelineConfig(
        sessions="sessions.jsonl",
        truth="truth.csv",
        aux="aux.csv",
        org_domains="org_domains.csv",
        seeds="seeds.csv",
        k_range=DEFAULT_K_RANGE,
        out_dir="out",
        rng_seed=config.rng_seed,
    )
    (out / "run.cfg").write_text(json.dumps(run_cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(corpus.sessions)} sessions from {len(corpus.labels)} IPs written to {out}")
    return 0


def cmd_report(args) -> int:
    log = load_session_log(args.input)
    counts = report_counts(log.sessions)
    width = max(map(len, COUNT_ROWS))
    for row in COUNT_ROWS:
        print(f"{row:<{width}}  {counts[row]}")
    for reason, n in invalid_reasons(log.sessions).items():
        print(f"  invalid ({reason}): {n}")
    if log.malformed:
        print(f"malformed lines skipped: {len(log.malformed)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "counts.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "count"])
            for row in COUNT_ROWS:
                w.writerow([row, counts[row]])
    return 0


def _configure_logging() -> None:
    level_name = os.environ.get("ICSTRACE_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "report":
            return cmd_report(args)
        return cmd_pipeline(args, sweep=args.command == "sweep")
    except IcsTraceError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
