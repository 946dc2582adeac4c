"""Command line entry point: ``zampling <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

import yaml

from . import experiments
from .errors import ConfigError, ZamplingError

log = logging.getLogger("zampling")

HELP = {
    "compress-sweep": "local training over a (d, m/n, seed) grid on the small arch",
    "federated": "mask-averaging federated runs per compression level",
    "sensitivity": "perturbation probe of sampled vs continuously trained p",
    "zhou-compare": "best-of-k sampled masks across degrees d with n = m",
    "integrality-gap": "expected vs sampled vs discretized accuracy over beta inits",
    "analyze": "closed-form values next to Monte Carlo estimates",
    "train-local": "a single local training run with per-epoch history",
}


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key.strip()] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse value for {key}: {exc}") from exc
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zampling", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in experiments.COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", help="JSON or YAML config document")
        p.add_argument("--data-dir", help="MNIST IDX directory (else $ZAMPLE_DATA_DIR)")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--jobs", type=int, help="concurrent grid cells / clients")
        p.add_argument("--paper-scale", action="store_true",
                       help="restore the full published grid sizes and epoch counts")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (value parsed as YAML); repeatable")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        document = experiments.load_config_file(args.config) if args.config else {}
        overrides = _parse_set(args.set)
        for key in ("seed", "jobs", "data_dir"):
            value = getattr(args, key)
            if value is not None:
                overrides[key] = value
        if overrides.get("jobs", 1) is not None and int(overrides.get("jobs", 1)) < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = experiments.resolve_config(args.command, document, overrides, args.paper_scale)
        paths = experiments.run(args.command, cfg, args.out)
    except ZamplingError as exc:
        print(f"zampling: error: {exc}", file=sys.stderr)
        return exc.exit_code
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
