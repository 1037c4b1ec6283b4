"""
`hetnet solve`: run one algorithm on a saved scenario
"""
import argparse
import logging
from pathlib import Path

from hetnet.commands import read_model, read_scenario
from hetnet.config import RunConfig
from hetnet.cro import write_trace_csv
from hetnet.errors import ConfigError
from hetnet.harness import TABLE1_HEADER, Metrics
from hetnet.jur import EXACT, solve_dsm, solve_jur_bnb, solve_jur_exhaustive, write_solution_csv
from hetnet.lhm import solve_lhm
from hetnet.pricing import build_bid_table, write_bid_csv
from hetnet.records import write_csv

logger = logging.getLogger(__name__)

ALGORITHMS = ("dsm", "jur", "lhm")


def register(subparsers) -> None:
    parser = subparsers.add_parser("solve", help="solve one scenario with DSM, JUR or LHM")
    parser.add_argument("scenario", type=Path, help="scenario JSON from `hetnet generate`")
    parser.add_argument("-a", "--algorithm", choices=ALGORITHMS, required=True)
    parser.add_argument("--model", type=Path, help="trained SVM model (required for lhm)")
    parser.add_argument("--exact-only", action="store_true", help="jur: enumerate every association instead of B&B")
    parser.add_argument("--no-timings", action="store_true", help="write running time 0.0")
    parser.set_defaults(handler=cmd_solve)


def cmd_solve(args: argparse.Namespace, config: RunConfig) -> int:
    if args.algorithm == "lhm" and args.model is None:
        raise ConfigError("--model is required for the lhm algorithm")
    if args.exact_only and args.algorithm != "jur":
        raise ConfigError("--exact-only applies to jur only")

    scenario = read_scenario(args.scenario)
    model = read_model(args.model) if args.algorithm == "lhm" else None
    bids = build_bid_table(scenario)
    solver = config.solver

    if args.algorithm == "dsm":
        solution = solve_dsm(scenario, bids, solver.cro)
    elif args.algorithm == "jur" and args.exact_only:
        solution = solve_jur_exhaustive(scenario, bids, solver.jur, solver.cro)
    elif args.algorithm == "jur":
        solution = solve_jur_bnb(scenario, bids, solver.jur, solver.cro)
    else:
        solution = solve_lhm(scenario, model, bids, config.lhm, None, config.scenario.reference_power, solver.cro)

    out_dir = config.output_dir
    name = args.algorithm
    include_timings = config.experiments.include_timings and not args.no_timings
    metrics = Metrics.from_solution(name.upper(), solution, include_timings)
    extra = {"fallbacks": solution.fallbacks} if args.algorithm == "lhm" else None
    write_solution_csv(solution, out_dir / f"solution_{name}.csv", extra)
    write_csv(out_dir / f"metrics_{name}.csv", TABLE1_HEADER, [metrics.table_row()])
    if args.algorithm != "dsm":
        write_bid_csv(bids, out_dir / "bids.csv")
    if args.algorithm == "lhm":
        write_trace_csv(solution.resources, out_dir / "cro_trace.csv")
    logger.info("[SOLVE] %s results in %s", name, out_dir)

    print(
        f"{name}: total cost {solution.total_cost:.6g}, "
        f"service rate {metrics.service_rate:.2%}, "
        f"offloaded {metrics.offloaded_count}/{metrics.n_users}, "
        f"runtime {metrics.running_time:.3f}s"
    )
    if solution.optimality != EXACT:
        print(f"note: node budget reached, optimality gap {solution.gap:.6g}")
    return 0
