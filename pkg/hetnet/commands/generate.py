"""
`hetnet generate`: draw one scenario from the configured seed
"""
import argparse
import logging
from pathlib import Path

from hetnet.commands import scenario_from_config
from hetnet.config import RunConfig
from hetnet.records import write_text

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("generate", help="generate a random scenario")
    parser.add_argument("--users", type=int, help="override scenario.n_users")
    parser.add_argument("--sbs", type=int, help="override scenario.n_sbs")
    parser.add_argument("-o", "--output", type=Path, help="scenario file (default <out>/scenario.json)")
    parser.set_defaults(handler=cmd_generate)


def cmd_generate(args: argparse.Namespace, config: RunConfig) -> int:
    overrides = {}
    if args.users is not None:
        overrides["n_users"] = args.users
    if args.sbs is not None:
        overrides["n_sbs"] = args.sbs
    if overrides:
        scenario_cfg = config.scenario.model_validate({**config.scenario.model_dump(), **overrides})
        config = config.model_copy(update={"scenario": scenario_cfg})

    scenario = scenario_from_config(config)
    out_path = args.output or config.output_dir / "scenario.json"
    write_text(out_path, scenario.to_json() + "\n")
    logger.info("[GENERATE] wrote %s", out_path)
    print(f"scenario: {len(scenario.users)} users, {len(scenario.sbss)} SBSs, seed {scenario.seed} -> {out_path}")
    return 0
