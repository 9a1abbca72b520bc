"""Command-line entry point.

Subcommands run a prefix of the experiment pipeline on one config:

* ``optimize``        pulse search only,
* ``verify``          ... plus the Monte Carlo estimate,
* ``sweep``           ... plus the noise-strength sweep,
* ``filter``          pulse search plus filter-function export,
* ``run``             everything the config's `pipeline` lists,
* ``validate-config`` schema check without compute.

`--config` takes a file path or a bundled config name.  Parallelism comes
from `--parallelism`, else the GATESMITH_PARALLELISM environment variable,
else 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from .config import ConfigError, catalog_names, load_config
from .runner import ExperimentError, run_experiment

__all__ = ["main", "build_parser"]

PARALLELISM_ENV = "GATESMITH_PARALLELISM"

_STAGE_SETS = {
    "optimize": ("optimize",),
    "verify": ("optimize", "verify"),
    "sweep": ("optimize", "sweep"),
    "filter": ("optimize", "filter"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gatesmith",
        description="Pulse synthesis and verification for gates under time-correlated noise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_out=True):
        p.add_argument("--config", required=True, help="config file path or bundled config name")
        if needs_out:
            p.add_argument("--out", required=True, help="run directory for artifacts")
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
            p.add_argument(
                "--parallelism", type=int, default=None,
                help=f"worker processes (default: ${PARALLELISM_ENV} or 1)",
            )
            p.add_argument(
                "--strategy", choices=["idg", "qsn", "tvn", "ftf"], default=None,
                help="restrict the run to one strategy",
            )

    for name, helptext in [
        ("optimize", "find pulses for the configured strategies"),
        ("verify", "optimize and Monte Carlo the resulting pulses"),
        ("sweep", "optimize and sweep the noise strength"),
        ("filter", "optimize and export filter functions"),
        ("run", "execute the config's full pipeline"),
    ]:
        add_common(sub.add_parser(name, help=helptext))

    add_common(sub.add_parser("validate-config", help="check a config and exit"), needs_out=False)

    sub.add_parser("list-configs", help="print the bundled config names")
    return parser


def _resolve_parallelism(flag: Optional[int]) -> int:
    if flag is not None:
        value = flag
    else:
        raw = os.environ.get(PARALLELISM_ENV)
        try:
            value = int(raw) if raw else 1
        except ValueError:
            raise SystemExit(f"{PARALLELISM_ENV} must be an integer, got {raw!r}")
    if value < 1:
        raise SystemExit("parallelism must be >= 1")
    return value


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "list-configs":
        for name in catalog_names():
            print(name)
        return 0

    if args.command == "validate-config":
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return 2
        print(f"ok: schema {cfg['schema']}, name {cfg.get('name', '<unnamed>')!r}")
        return 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2

    if args.command in _STAGE_SETS:
        cfg["pipeline"] = list(_STAGE_SETS[args.command])

    try:
        out = run_experiment(
            cfg,
            args.out,
            seed=args.seed,
            strategy=args.strategy,
            parallelism=_resolve_parallelism(args.parallelism),
        )
    except (ExperimentError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"see {os.path.join(args.out, 'error.json')}", file=sys.stderr)
        return 1
    print(f"wrote {out / 'report.json'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
