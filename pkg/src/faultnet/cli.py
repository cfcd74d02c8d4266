"""Command-line entry point: ``faultnet <experiment> [--config FILE] ...``.

Exit codes: 0 success, 1 I/O failure, 2 bad configuration, 3 solver failure
or too many unroutable flows.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, NumericalError
from .experiments import KINDS, ROUTING_FAILURE_LIMIT, ExperimentConfig, run_experiment

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_FAILURE = 3


def _global_flags(parser, default):
    parser.add_argument("--config", default=default, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=default, help="base seed (unsigned 64-bit)")
    parser.add_argument("--workers", type=int, default=default, help="worker processes")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faultnet", description=__doc__.splitlines()[0])
    _global_flags(parser, None)
    sub = parser.add_subparsers(dest="kind", required=True, metavar="EXPERIMENT")
    shared = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps subcommand defaults from clobbering flags given before it.
    _global_flags(shared, argparse.SUPPRESS)
    shared.add_argument("--n", type=int, nargs="+", dest="n_list", help="node counts")
    shared.add_argument("--q", type=float, nargs="+", dest="q_list", help="failure probabilities")
    shared.add_argument("--trials", type=int, help="trials per parameter tuple")
    shared.add_argument("--radius", type=float, nargs="+", help="explicit radii")
    shared.add_argument("--auto-radius", type=float, nargs="+", metavar="MULT",
                        help="radii as multiples of the closed-form critical radius")
    for kind in KINDS:
        sub.add_parser(kind, parents=[shared], help=f"run the {kind} experiment")
    return parser


def load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        if raw.get("kind", args.kind) != args.kind:
            raise ConfigError("kind", f"config says {raw['kind']!r} but subcommand is {args.kind!r}")
    raw["kind"] = args.kind
    overrides = {
        "base_seed": args.seed,
        "workers": args.workers,
        "output_dir": args.out,
        "n_list": getattr(args, "n_list", None),
        "q_list": getattr(args, "q_list", None),
        "trials": getattr(args, "trials", None),
    }
    for key, val in overrides.items():
        if val is not None:
            raw[key] = val
    if getattr(args, "radius", None):
        raw["radius"] = args.radius
    elif getattr(args, "auto_radius", None):
        raw["radius"] = {"auto": args.auto_radius}
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"faultnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"faultnet: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"faultnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"faultnet: solver failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"faultnet: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {cfg.output_dir}/{cfg.kind}.csv ({len(report.rows)} rows)")
    if report.routing_failure_fraction > ROUTING_FAILURE_LIMIT:
        print(f"faultnet: {report.routing_failure_fraction:.1%} of flows could not be routed "
              f"(limit {ROUTING_FAILURE_LIMIT:.0%})", file=sys.stderr)
        return EXIT_FAILURE
    return 0
