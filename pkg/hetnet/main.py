"""
hetnet command-line entry point

Exit codes: 0 success, 1 I/O error, 2 usage or configuration error,
3 infeasible instance or solver failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from hetnet import __version__
from hetnet.commands import experiments, generate, solve, train
from hetnet.config import RunConfig, default_run_config, load_run_config
from hetnet.errors import ConfigError, InfeasibleError, NotConvergedError
from hetnet.settings import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetnet",
        description="User offloading and resource allocation for URLLC HetNets",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="RunConfig JSON file")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="output directory (overrides the config)")
    parser.add_argument("--quiet", action="store_true", help="log warnings and errors only")
    parser.add_argument(
        "--print-default-config",
        action="store_true",
        help="print the default RunConfig as JSON and exit",
    )

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    generate.register(subparsers)
    solve.register(subparsers)
    train.register(subparsers)
    experiments.register(subparsers)
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    config = load_run_config(args.config) if args.config else default_run_config()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if updates:
        # re-validate so a bad --seed is reported like a bad config value
        config = RunConfig.model_validate({**config.model_dump(), **updates})
    return config


def _describe(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"  {where}: {err['msg']}")
    return "invalid configuration:\n" + "\n".join(lines)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    configure_logging(quiet=args.quiet)

    if args.print_default_config:
        print(default_run_config().model_dump_json(indent=2))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("hetnet: error: a command is required", file=sys.stderr)
        return EXIT_USAGE

    try:
        config = _run_config(args)
        return args.handler(args, config)
    except ValidationError as exc:
        print(f"hetnet: {_describe(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"hetnet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, NotConvergedError) as exc:
        print(f"hetnet: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"hetnet: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
