"""Command-line entry point: ``bdma <subcommand> --config FILE --seed N --out DIR``."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiments import run_linksim_sweep, run_prop_suite, run_schedule, run_spreads, run_sumrate_sweep

COMMANDS = {
    "verify-props": run_prop_suite,
    "spreads": run_spreads,
    "schedule": run_schedule,
    "sumrate": run_sumrate_sweep,
    "linksim": run_linksim_sweep,
}


def _override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdma", description="Beam-domain channel, sync and scheduling experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        p.add_argument("--config", help="key = value config file (default: desk preset)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default="out", help="output directory (default: %(default)s)")
        p.add_argument("--set", type=_override, action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key; repeatable")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = dict(args.set)
    if args.seed is not None:
        if args.seed < 0:
            print("error: seed must be nonnegative", file=sys.stderr)
            return 2
        overrides["master_seed"] = str(args.seed)
    try:
        config = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = COMMANDS[args.command](config)
    for path in result.write(args.out):
        print(path)
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
