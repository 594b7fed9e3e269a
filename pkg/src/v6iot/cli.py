"""Command line entry point.

Exit status: 0 success, 1 configuration error, 2 a stage failed (artifacts
of the stages that completed are kept).
"""
from __future__ import annotations

import argparse
import logging
import random
import sys
from dataclasses import replace
from pathlib import Path

from .addresses import format_address
from .config import CampaignConfig, ConfigError
from .io import write_json

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, metavar="PATH", help="campaign JSON file")
    p.add_argument("--rng-seed", type=int, default=None, help="override the campaign rng_seed")
    p.add_argument("--dry-run", action="store_true", help="print the probe plan without dispatching")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v6iot", description="IPv6 IoT deployment discovery campaigns")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="every stage in order, then the report")
    _common(run)
    helps = {
        "seeds": "load hitlists, resolve zone and v4-derived names",
        "generate": "run the configured target generators",
        "scan": "blocklist, deduplicate and probe all candidates",
        "validate": "classify hosts and write deployment records",
        "alias": "subnet-similarity alias detection",
        "trace": "origin ledger, generator metrics, combination choice",
        "assess": "TLS grading and access control checks",
        "report": "summary tables and plot data from artifacts",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text))
    h = sub.add_parser("harness", help="materialize a synthetic universe and a ready campaign config")
    h.add_argument("--out", required=True, type=Path, help="directory to write into")
    h.add_argument("--spec", type=Path, help="UniverseSpec JSON (default: the built-in standard universe)")
    h.add_argument("--rng-seed", type=int, default=7)
    h.add_argument("--without", action="append", default=[], metavar="PROTOCOL",
                   help="plant no responders for this protocol (standard universe only)")
    h.add_argument("--seed-fraction", type=float, default=0.5,
                   help="fraction of planted addresses written to the hitlist")
    h.add_argument("--no-generators", action="store_true", help="campaign config without generator runs")
    h.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load(args) -> CampaignConfig:
    cfg = CampaignConfig.load(args.config)
    if args.rng_seed is not None:
        cfg = replace(cfg, rng_seed=args.rng_seed)
    return cfg


def cmd_harness(args, echo) -> int:
    from .harness import UniverseSpec, build_universe, standard_spec
    from .io import read_json

    if not 0 <= args.seed_fraction <= 1:
        echo("error: --seed-fraction must be in [0, 1]")
        return EXIT_CONFIG
    if args.spec is not None:
        if not args.spec.is_file():
            echo(f"error: universe spec not found: {args.spec}")
            return EXIT_CONFIG
        spec_obj = read_json(args.spec)
    else:
        spec_obj = standard_spec(args.rng_seed, without=args.without)
    try:
        universe = build_universe(UniverseSpec.from_json(spec_obj))
    except ValueError as exc:
        echo(f"error: {exc}")
        return EXIT_CONFIG
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "universe.json", spec_obj)
    universe.write_ground_truth(out / "ground_truth.jsonl")
    addrs = universe.addresses()
    n = round(len(addrs) * args.seed_fraction)
    chosen = sorted(random.Random(args.rng_seed).sample(addrs, n))
    (out / "hitlist.txt").write_text("# planted addresses\n" + "".join(format_address(a) + "\n" for a in chosen),
                                     encoding="utf-8")
    (out / "domains.txt").write_text("".join(d + "\n" for d in sorted(universe.spec.domains)), encoding="utf-8")
    config = {
        "protocols": ["MQTT", "AMQP", "OPCUA", "COAP"],
        "seeds": {"hitlist": "hitlist.txt", "zone_domains": "domains.txt"},
        "harness": "universe.json",
        "output": "out",
        "rng_seed": args.rng_seed,
        "generators": [] if args.no_generators else [
            {"name": "density", "technique": "DensityFillUp", "seed_source": "TUMHitlist", "budget": 1000,
             "rng_seed": 1},
            {"name": "entropy", "technique": "EntropyModel", "seed_source": "TUMHitlist", "budget": 500,
             "rng_seed": 2},
            {"name": "partition", "technique": "ActivePartition", "seed_source": "TUMHitlist", "budget": 500,
             "rng_seed": 3, "params": {"step_budget": 100}},
        ],
    }
    write_json(out / "config.json", config)
    echo(f"{len(universe.plants)} plants, {n} in hitlist; campaign config at {out / 'config.json'}")
    return EXIT_OK


def main(argv=None, echo=print) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "harness":
        return cmd_harness(args, echo)
    from .pipeline import STAGES, run_pipeline

    try:
        cfg = _load(args)
    except ConfigError as exc:
        echo(f"error: {exc}")
        return EXIT_CONFIG
    stages = STAGES if args.command == "run" else [args.command]
    if args.dry_run and args.command not in ("run", "scan"):
        echo("error: --dry-run applies to run and scan")
        return EXIT_CONFIG
    if args.dry_run and args.command == "scan":
        stages = ["seeds", "generate", "scan"]
    return run_pipeline(cfg, stages, dry_run=args.dry_run, echo=echo)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
