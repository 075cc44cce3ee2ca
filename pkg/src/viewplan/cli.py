"""Command-line entry point: batch experiment runner driven by YAML configs.

Usage: viewplan <subcommand> --config cfg.yaml [--out DIR] [--seed N] [--jobs N]

Subcommands map one-to-one onto experiment kinds; the config's `kind` field
must match the subcommand.
"""

from __future__ import annotations

import argparse
import sys

from viewplan.experiments import KINDS, ConfigError, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a '{kind}' experiment config")
        p.add_argument("--config", required=True, help="path to the YAML experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="global seed (overrides config)")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if cfg["kind"] != args.command:
        print(
            f"config error: config kind {cfg['kind']!r} does not match subcommand {args.command!r}",
            file=sys.stderr,
        )
        return 2
    return run_experiment(args.config, out_dir=args.out, seed=args.seed, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
