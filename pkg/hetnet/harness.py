"""
Experiment batch runs: DSM / JUR / LHM comparison on one scenario and the
service-rate sweep over user load, written out as plot-data CSVs
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from hetnet.config import CroOptions, JurOptions, LhmConfig, ScenarioConfig
from hetnet.errors import ConfigError, InfeasibleError, NotConvergedError
from hetnet.jur import JurSolution, solve_dsm, solve_jur_bnb
from hetnet.ledger import RunLedger
from hetnet.lhm import Predictor, solve_lhm
from hetnet.pricing import BidTable, build_bid_table
from hetnet.records import file_sha256, text_sha256, write_csv, write_text
from hetnet.scenario import Scenario, generate_scenario
from hetnet.seeding import derive_seed
from hetnet.settings import parallel_map
from hetnet.svm import SvmModel

logger = logging.getLogger(__name__)

ALGORITHMS = ("DSM", "JUR", "LHM")
TABLE1_HEADER = ("algorithm", "running_time_s", "avg_cost_per_user", "service_rate", "offloaded")
FIG2_HEADER = ("user_id", "algorithm", "cost")
FIG3_HEADER = ("n_users", "algorithm", "service_rate")

Algorithm = Literal["DSM", "JUR", "LHM"]


class Metrics(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    algorithm: Algorithm
    running_time: float = Field(ge=0)
    avg_cost_per_user: float
    service_rate: float
    offloaded_count: int = Field(ge=0)
    scenario_seed: int
    n_users: int = Field(ge=0)
    failed: bool = False
    message: str = ""

    @model_validator(mode="after")
    def _counts(self) -> "Metrics":
        if self.offloaded_count > self.n_users:
            raise ValueError("offloaded_count exceeds n_users")
        return self

    @classmethod
    def from_solution(cls, algorithm: str, solution: JurSolution, include_timings: bool = True) -> "Metrics":
        served = solution.served_count
        return cls(
            algorithm=algorithm,
            running_time=solution.wall_time if include_timings else 0.0,
            avg_cost_per_user=solution.total_cost / served if served else 0.0,
            service_rate=served / solution.n_users if solution.n_users else 1.0,
            offloaded_count=solution.offloaded_count,
            scenario_seed=solution.scenario.seed,
            n_users=solution.n_users,
        )

    @classmethod
    def failure(cls, algorithm: str, scenario: Scenario, error: Exception) -> "Metrics":
        return cls(
            algorithm=algorithm,
            running_time=0.0,
            avg_cost_per_user=math.nan,
            service_rate=math.nan,
            offloaded_count=0,
            scenario_seed=scenario.seed,
            n_users=len(scenario.users),
            failed=True,
            message=str(error),
        )

    def table_row(self) -> tuple:
        return (self.algorithm, self.running_time, self.avg_cost_per_user, self.service_rate, self.offloaded_count)


class ComparisonSummary(BaseModel):
    jur_vs_dsm_cost: Optional[float] = None  # avg cost ratio
    lhm_vs_dsm_cost: Optional[float] = None
    lhm_vs_jur_cost_gap: Optional[float] = None  # relative total-cost excess
    lhm_agreement: Optional[float] = None  # SVM prediction vs JUR, before repair
    lhm_repaired_agreement: Optional[float] = None
    offload_recall: Optional[float] = None  # JUR offloads that LHM also offloads
    lhm_vs_jur_runtime: Optional[float] = None
    lhm_fallbacks: Optional[int] = None


@dataclass
class ComparisonResult:
    scenario: Scenario
    bids: BidTable
    metrics: List[Metrics]
    solutions: Dict[str, Optional[JurSolution]] = field(default_factory=dict)
    errors: Dict[str, Exception] = field(default_factory=dict)
    include_timings: bool = True

    @property
    def succeeded(self) -> int:
        return sum(1 for m in self.metrics if not m.failed)

    def metric(self, algorithm: str) -> Metrics:
        return next(m for m in self.metrics if m.algorithm == algorithm)

    def cost_rows(self) -> List[tuple]:
        rows = []
        for algorithm in ALGORITHMS:
            solution = self.solutions.get(algorithm)
            if solution is None:
                continue
            rows.extend((user_id, algorithm, cost) for user_id, cost in sorted(solution.user_costs().items()))
        return sorted(rows, key=lambda r: (r[0], ALGORITHMS.index(r[1])))


def _ratio(a: float, b: float) -> Optional[float]:
    if b == 0 or math.isnan(a) or math.isnan(b):
        return None
    return a / b


def summarize(result: ComparisonResult) -> ComparisonSummary:
    summary = ComparisonSummary()
    ok = {m.algorithm: m for m in result.metrics if not m.failed}
    if "DSM" in ok and "JUR" in ok:
        summary.jur_vs_dsm_cost = _ratio(ok["JUR"].avg_cost_per_user, ok["DSM"].avg_cost_per_user)
    if "DSM" in ok and "LHM" in ok:
        summary.lhm_vs_dsm_cost = _ratio(ok["LHM"].avg_cost_per_user, ok["DSM"].avg_cost_per_user)
    jur, lhm = result.solutions.get("JUR"), result.solutions.get("LHM")
    if jur is not None and lhm is not None:
        summary.lhm_vs_jur_cost_gap = _ratio(lhm.total_cost - jur.total_cost, jur.total_cost)
        summary.lhm_agreement = lhm.svm_agreement
        summary.lhm_repaired_agreement = lhm.repaired_agreement
        jur_off = set(jur.association.offloaded())
        if jur_off:
            summary.offload_recall = len(jur_off & set(lhm.association.offloaded())) / len(jur_off)
        if result.include_timings:
            summary.lhm_vs_jur_runtime = _ratio(lhm.wall_time, jur.wall_time)
        summary.lhm_fallbacks = lhm.fallbacks
    return summary


def _guarded(algorithm: str, scenario: Scenario, run) -> Tuple[Optional[JurSolution], Optional[Exception]]:
    try:
        return run(), None
    except (InfeasibleError, NotConvergedError) as exc:
        logger.warning("[HARNESS] %s failed on seed %d: %s", algorithm, scenario.seed, exc)
        return None, exc


def run_comparison(
    scenario: Scenario,
    lhm_model: "SvmModel | Predictor",
    bids: Optional[BidTable] = None,
    jur_opts: Optional[JurOptions] = None,
    cro_opts: Optional[CroOptions] = None,
    lhm_opts: Optional[LhmConfig] = None,
    reference_power: Optional[float] = None,
    include_timings: bool = True,
) -> ComparisonResult:
    """
    DSM, JUR and LHM on the same scenario and the same bid table.

    Bid-table construction is shared and not timed. A solver failure
    becomes a failed Metrics row instead of aborting the comparison.
    """
    if bids is None:
        bids = build_bid_table(scenario)
    solutions: Dict[str, Optional[JurSolution]] = {}
    errors: Dict[str, Exception] = {}
    metrics = []

    runs = (
        ("DSM", lambda: solve_dsm(scenario, bids, cro_opts)),
        ("JUR", lambda: solve_jur_bnb(scenario, bids, jur_opts, cro_opts)),
        (
            "LHM",
            lambda: solve_lhm(
                scenario, lhm_model, bids, lhm_opts, solutions.get("JUR"), reference_power, cro_opts
            ),
        ),
    )
    for algorithm, run in runs:
        solution, error = _guarded(algorithm, scenario, run)
        solutions[algorithm] = solution
        if solution is None:
            errors[algorithm] = error
            metrics.append(Metrics.failure(algorithm, scenario, error))
        else:
            metrics.append(Metrics.from_solution(algorithm, solution, include_timings))
    for m in metrics:
        logger.info(
            "[HARNESS] %s: avg cost %.4f, service %.3f, offloaded %d, %.3fs",
            m.algorithm,
            m.avg_cost_per_user,
            m.service_rate,
            m.offloaded_count,
            m.running_time,
        )
    return ComparisonResult(scenario, bids, metrics, solutions, errors, include_timings)


class SweepRow(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_users: int
    algorithm: Algorithm
    service_rate: float
    avg_cost: float


class SweepResult(BaseModel):
    rows: List[SweepRow]

    @model_validator(mode="after")
    def _increasing(self) -> "SweepResult":
        for algorithm in ALGORITHMS:
            ns = [r.n_users for r in self.rows if r.algorithm == algorithm]
            if any(b <= a for a, b in zip(ns, ns[1:])):
                raise ValueError(f"{algorithm} series is not strictly increasing in n_users")
        return self

    def series(self, algorithm: str) -> List[Tuple[int, float]]:
        return [(r.n_users, r.service_rate) for r in self.rows if r.algorithm == algorithm]


def check_grid(n_grid: Sequence[int]) -> List[int]:
    grid = [int(n) for n in n_grid]
    if not grid:
        raise ConfigError("load grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("load grid must be strictly ascending")
    if grid[0] < 1:
        raise ConfigError("load grid needs at least one user per point")
    return grid


def _sweep_row(solution: Optional[JurSolution], error: Optional[Exception], algorithm: str, n: int) -> SweepRow:
    if solution is not None:
        served = solution.served_count
        avg = solution.total_cost / served if served else 0.0
        return SweepRow(n_users=n, algorithm=algorithm, service_rate=served / n, avg_cost=avg)
    blocked = len(getattr(error, "blocking_users", ())) if isinstance(error, InfeasibleError) else n
    # users outside the blocking set are the ones the network could still carry
    return SweepRow(n_users=n, algorithm=algorithm, service_rate=(n - min(blocked, n)) / n, avg_cost=math.nan)


def _sweep_point(job) -> List[SweepRow]:
    config, n, seed, lhm_model, jur_opts, cro_opts, lhm_opts = job
    scenario = generate_scenario(config.model_copy(update={"n_users": n}), seed)
    result = run_comparison(
        scenario, lhm_model, None, jur_opts, cro_opts, lhm_opts, config.reference_power, include_timings=False
    )
    return [
        _sweep_row(result.solutions.get(algorithm), result.errors.get(algorithm), algorithm, n)
        for algorithm in ALGORITHMS
    ]


def sweep_load(
    base_config: ScenarioConfig,
    n_grid: Sequence[int],
    lhm_model: "SvmModel | Predictor",
    master_seed: int = 1,
    jur_opts: Optional[JurOptions] = None,
    cro_opts: Optional[CroOptions] = None,
    lhm_opts: Optional[LhmConfig] = None,
    workers: Optional[int] = None,
) -> SweepResult:
    """
    Service rate and average cost per algorithm at each load.

    Every point uses the seed derive_seed(master, "sweep"). Users draw from
    per-user streams, so the population at load n is the first n users of
    every larger point and a point does not change when the grid around it
    does.
    """
    grid = check_grid(n_grid)
    seed = derive_seed(master_seed, "sweep")
    jobs = [
        (base_config, n, seed, lhm_model, jur_opts, cro_opts, lhm_opts) for n in grid
    ]
    per_point = parallel_map(_sweep_point, jobs, workers)
    rows = [row for algorithm in ALGORITHMS for point in per_point for row in point if row.algorithm == algorithm]
    return SweepResult(rows=rows)


def input_hashes(scenario: Scenario, bids: BidTable) -> Dict[str, str]:
    return {"scenario_sha256": text_sha256(scenario.to_json()), "bids_sha256": text_sha256(bids.model_dump_json())}


def emit_plot_data(
    out_dir: Path,
    comparison: Optional[ComparisonResult] = None,
    sweep: Optional[SweepResult] = None,
    ledger: Optional[RunLedger] = None,
) -> Dict[str, str]:
    """
    Write table1.csv / fig2_cost.csv / summary.json for a comparison and
    fig3_service.csv for a sweep. Returns {file name: sha256}; when a
    ledger is given the files are chained into it and manifest.json is
    written too.
    """
    if comparison is None and (sweep is None or not sweep.rows):
        raise ConfigError("nothing to write: no comparison and an empty sweep")
    out_dir = Path(out_dir)
    written: List[Path] = []
    if comparison is not None:
        written.append(write_csv(out_dir / "table1.csv", TABLE1_HEADER, [m.table_row() for m in comparison.metrics]))
        written.append(write_csv(out_dir / "fig2_cost.csv", FIG2_HEADER, comparison.cost_rows()))
        summary = summarize(comparison).model_dump()
        written.append(write_text(out_dir / "summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n"))
        if ledger is not None:
            ledger.record("inputs", seed=comparison.scenario.seed, **input_hashes(comparison.scenario, comparison.bids))
    if sweep is not None and sweep.rows:
        rows = [(r.n_users, r.algorithm, r.service_rate) for r in sweep.rows]
        written.append(write_csv(out_dir / "fig3_service.csv", FIG3_HEADER, rows))

    manifest = {}
    for path in written:
        if ledger is not None:
            entry = ledger.record_file(path, out_dir)
            manifest[entry.data["name"]] = entry.data["sha256"]
        else:
            manifest[path.name] = file_sha256(path)
    if ledger is not None:
        ledger.write(out_dir / "manifest.json")
    logger.info("[HARNESS] wrote %s to %s", ", ".join(sorted(manifest)), out_dir)
    return manifest
