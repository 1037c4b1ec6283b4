"""
`hetnet compare` and `hetnet sweep`: the DSM / JUR / LHM experiment runs
"""
import argparse
import logging
import math
from pathlib import Path
from typing import Optional

from hetnet.commands import new_ledger, read_model, read_scenario, scenario_from_config
from hetnet.config import RunConfig
from hetnet.harness import check_grid, emit_plot_data, run_comparison, sweep_load
from hetnet.ledger import RunLedger
from hetnet.lhm import train_lhm_model
from hetnet.records import text_sha256
from hetnet.seeding import derive_seed
from hetnet.svm import SvmModel

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    compare = subparsers.add_parser("compare", help="DSM vs JUR vs LHM on one scenario")
    compare.add_argument("--scenario", type=Path, help="scenario JSON (default: generate from the config seed)")
    compare.add_argument("--model", type=Path, help="trained SVM model (default: train from the config)")
    compare.add_argument("--no-timings", action="store_true", help="write running times as 0.0")
    compare.set_defaults(handler=cmd_compare)

    sweep = subparsers.add_parser("sweep", help="service rate against the number of users")
    sweep.add_argument("--grid", type=int, nargs="+", help="user counts, strictly ascending")
    sweep.add_argument("--model", type=Path, help="trained SVM model (default: train from the config)")
    sweep.set_defaults(handler=cmd_sweep)


def _model_for(path: Optional[Path], config: RunConfig, ledger: RunLedger) -> SvmModel:
    if path is not None:
        model = read_model(path)
    else:
        logger.info("[EXPERIMENT] no --model given, training from the config")
        c = config.solver
        model = train_lhm_model(config.lhm, config.scenario, config.seed, jur_opts=c.jur, cro_opts=c.cro).model
    ledger.record("model", sha256=text_sha256(model.to_json()), support_vectors=len(model.support_vectors))
    return model


def cmd_compare(args: argparse.Namespace, config: RunConfig) -> int:
    ledger = new_ledger("compare", config)
    scenario = read_scenario(args.scenario) if args.scenario else scenario_from_config(config)
    model = _model_for(args.model, config, ledger)
    include_timings = config.experiments.include_timings and not args.no_timings

    result = run_comparison(
        scenario,
        model,
        jur_opts=config.solver.jur,
        cro_opts=config.solver.cro,
        lhm_opts=config.lhm,
        reference_power=config.scenario.reference_power,
        include_timings=include_timings,
    )
    emit_plot_data(config.output_dir, comparison=result, ledger=ledger)

    for m in result.metrics:
        if m.failed:
            print(f"{m.algorithm}: failed ({m.message})")
        else:
            print(
                f"{m.algorithm}: avg cost {m.avg_cost_per_user:.6g}, service rate {m.service_rate:.2%}, "
                f"offloaded {m.offloaded_count}/{m.n_users}, runtime {m.running_time:.3f}s"
            )
    print(f"manifest: {config.output_dir / 'manifest.json'} ({ledger.head.hash[:12]})")
    return 0 if result.succeeded else 3


def cmd_sweep(args: argparse.Namespace, config: RunConfig) -> int:
    grid = check_grid(args.grid if args.grid is not None else config.experiments.sweep_grid)
    ledger = new_ledger("sweep", config)
    ledger.record("grid", n_users=list(grid), scenario_seed=derive_seed(config.seed, "sweep"))
    model = _model_for(args.model, config, ledger)

    result = sweep_load(
        config.scenario,
        grid,
        model,
        config.seed,
        config.solver.jur,
        config.solver.cro,
        config.lhm,
    )
    emit_plot_data(config.output_dir, sweep=result, ledger=ledger)

    for row in result.rows:
        print(f"{row.algorithm} n={row.n_users}: service rate {row.service_rate:.2%}")
    ok = [row for row in result.rows if not math.isnan(row.avg_cost)]
    print(f"manifest: {config.output_dir / 'manifest.json'} ({ledger.head.hash[:12]})")
    return 0 if ok else 3
