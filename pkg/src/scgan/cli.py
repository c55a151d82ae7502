"""Command-line entry point: ``scgan <stage> [--config PATH] [--set k=v ...]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import parse_config, parse_overrides
from .errors import ScganError
from .pipeline import STAGES, run_all, run_stage

COMMANDS = {
    "data": "data",
    "encode": "encoder",
    "cluster": "cluster",
    "map": "mappers",
    "decode": "decoder",
    "eval": "evaluate",
    "plot": "plot",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scgan", description=__doc__)
    parser.add_argument("command", choices=[*COMMANDS, "all"])
    parser.add_argument("--config", type=Path, help="key = value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--out", type=Path, default=Path("runs/default"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--force", action="store_true", help="rerun even if up to date")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = parse_overrides(args.overrides)
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        cfg = parse_config(args.config, overrides)
        if args.command == "all":
            results = run_all(cfg, args.out, args.force)
        else:
            stage = COMMANDS[args.command]
            results = [(stage, run_stage(stage, cfg, args.out, args.force))]
    except ScganError as exc:
        print(f"{exc.prefix}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
        return 2
    for stage, ran in results:
        print(f"{stage}: {'done' if ran else 'up to date'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
