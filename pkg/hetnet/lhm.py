"""
Learning-based heuristic: an SVM predicts the association, CRO allocates
the MBS-served users and the bid auction prices the offloaded ones
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

from hetnet.config import BarrierOpts, CroOptions, JurOptions, LhmConfig, ScenarioConfig, SvmParams, TrainingCorpus
from hetnet.cro import (
    CroInstance,
    blocking_users,
    empty_solution,
    fits_bandwidth,
    min_bandwidth_demand,
    solve_cro_barrier,
)
from hetnet.errors import InfeasibleError
from hetnet.jur import Association, JurSolution, solve_jur_bnb
from hetnet.pricing import BidTable, build_bid_table
from hetnet.scenario import Scenario, delay_blocked, delay_feasible, features_matrix, features_of, generate_scenario
from hetnet.seeding import derive_seed
from hetnet.settings import parallel_map
from hetnet.svm import SvmModel, TrainingSet, accuracy, cross_validate, label_of, train

logger = logging.getLogger(__name__)


@runtime_checkable
class Predictor(Protocol):
    def associate(self, scenario: Scenario, reference_power: Optional[float] = None) -> Dict[int, int]:
        ...


@dataclass
class SvmPredictor:
    model: SvmModel

    def associate(self, scenario: Scenario, reference_power: Optional[float] = None) -> Dict[int, int]:
        users = sorted(scenario.users, key=lambda u: u.id)
        if not users:
            return {}
        mu = self.model.predict_many(features_matrix(users, scenario, reference_power))
        return {u.id: int(m) for u, m in zip(users, mu)}


@dataclass
class FixedAssociation:
    """Replays known labels, e.g. a JUR association"""

    mu: Dict[int, int]

    def associate(self, scenario: Scenario, reference_power: Optional[float] = None) -> Dict[int, int]:
        return {u.id: int(self.mu.get(u.id, 1)) for u in scenario.users}


@dataclass
class ConstantAssociation:
    value: int = 1

    def associate(self, scenario: Scenario, reference_power: Optional[float] = None) -> Dict[int, int]:
        return {u.id: self.value for u in scenario.users}


def as_predictor(model: Union[SvmModel, Predictor]) -> Predictor:
    if isinstance(model, SvmModel):
        return SvmPredictor(model)
    return model


@dataclass
class LhmSolution(JurSolution):
    svm_agreement: Optional[float] = None  # raw prediction vs the reference
    repaired_agreement: Optional[float] = None  # association after fallbacks vs the reference
    fallbacks: int = 0
    predicted: Dict[int, int] = field(default_factory=dict)


def agreement(a: Dict[int, int], b: Dict[int, int]) -> float:
    if not a:
        return 1.0
    return sum(1 for u in a if a[u] == b.get(u)) / len(a)


def solve_lhm(
    scenario: Scenario,
    model: Union[SvmModel, Predictor],
    bids: BidTable,
    opts: Optional[LhmConfig] = None,
    reference: Optional[JurSolution] = None,
    reference_power: Optional[float] = None,
    cro_opts: Optional[CroOptions] = None,
) -> LhmSolution:
    """
    Predict, repair, allocate.

    Offload predictions without a bid or past the delay threshold are
    pinned back to the MBS. While the MBS set cannot fit in W_max, the
    MBS user with the cheapest valid bid is offloaded. Each repair counts
    as one fallback; the strict policy raises instead.
    """
    opts = opts or LhmConfig()
    barrier: BarrierOpts = opts.barrier
    late = delay_blocked(scenario)
    if late:
        raise InfeasibleError("delay threshold missed even without offloading", late)
    started = time.perf_counter()
    predicted = as_predictor(model).associate(scenario, reference_power)
    mu = dict(predicted)
    by_id = {u.id: u for u in scenario.users}

    def can_offload(user_id: int) -> bool:
        return bids.offloadable(user_id) and delay_feasible(by_id[user_id], False, scenario.delay)

    pinned = sorted(u for u, m in mu.items() if m == 0 and not can_offload(u))
    if pinned and opts.fallback == "strict":
        raise InfeasibleError("predicted offloads have no valid bid or miss the delay threshold", pinned)
    for user_id in pinned:
        mu[user_id] = 1
    fallbacks = len(pinned)

    instance = CroInstance.from_scenario(scenario)
    while True:
        mbs_users = [u for u in sorted(mu) if mu[u] == 1]
        subset = instance.subset(mbs_users)
        if fits_bandwidth(min_bandwidth_demand(subset), scenario.mbs.w_max):
            break
        if opts.fallback == "strict":
            raise InfeasibleError("predicted MBS set exhausts the bandwidth", blocking_users(subset))
        candidates = [u for u in mbs_users if can_offload(u)]
        if not candidates:
            raise InfeasibleError("bandwidth exhausted and no MBS user can be offloaded", blocking_users(subset))
        flip = min(candidates, key=lambda u: (bids.best_total(u), u))
        mu[flip] = 0
        fallbacks += 1

    resources = solve_cro_barrier(subset, barrier, cro_opts) if len(subset) else empty_solution()
    offloaded = sorted(u for u, m in mu.items() if m == 0)
    serving = {u: (scenario.mbs.id if m == 1 else bids.best(u).sbs_id) for u, m in mu.items()}
    total = math.fsum([resources.total_cost] + [bids.best_total(u) for u in offloaded])
    solution = LhmSolution(
        scenario=scenario,
        bids=bids,
        association=Association(mu, serving),
        resources=resources,
        total_cost=total,
        wall_time=round(time.perf_counter() - started, 3),
        fallbacks=fallbacks,
        predicted=predicted,
    )
    if reference is not None:
        solution.svm_agreement = agreement(predicted, reference.association.mu)
        solution.repaired_agreement = agreement(mu, reference.association.mu)
    logger.info(
        "[LHM] %d/%d offloaded, %d fallbacks, cost %.6g",
        len(offloaded),
        len(mu),
        fallbacks,
        total,
    )
    return solution


@dataclass
class LabelledCorpus:
    data: TrainingSet
    skipped: int = 0
    scenarios: int = 0


def _label_scenario(job: Tuple[Scenario, JurOptions, CroOptions, Optional[float]]) -> Optional[TrainingSet]:
    scenario, jur_opts, cro_opts, reference_power = job
    bids = build_bid_table(scenario)
    try:
        solution = solve_jur_bnb(scenario, bids, jur_opts, cro_opts)
    except InfeasibleError as exc:
        logger.warning("[LHM] scenario seed %d skipped: %s", scenario.seed, exc)
        return None
    users = sorted(scenario.users, key=lambda u: u.id)
    return TrainingSet.from_rows(
        (features_of(u, scenario, reference_power), label_of(solution.association.mu[u.id])) for u in users
    )


def build_training_data(
    scenarios: Sequence[Scenario],
    jur_opts: Optional[JurOptions] = None,
    cro_opts: Optional[CroOptions] = None,
    reference_power: Optional[float] = None,
    workers: Optional[int] = None,
) -> LabelledCorpus:
    """JUR-labelled feature rows, scenario by scenario in input order"""
    jobs = [(s, jur_opts or JurOptions(), cro_opts or CroOptions(), reference_power) for s in scenarios]
    parts = parallel_map(_label_scenario, jobs, workers)
    kept = [p for p in parts if p is not None]
    skipped = len(parts) - len(kept)
    if skipped:
        logger.warning("[LHM] %d of %d training scenarios were infeasible", skipped, len(parts))
    return LabelledCorpus(TrainingSet.concat(kept), skipped, len(parts))


def generate_training_scenarios(base: ScenarioConfig, corpus: TrainingCorpus, master_seed: int) -> List[Scenario]:
    config = base.model_copy(update={"n_users": corpus.n_users})
    return [
        generate_scenario(config, derive_seed(master_seed, "lhm-train", k)) for k in range(corpus.n_scenarios)
    ]


@dataclass
class TrainedModel:
    model: SvmModel
    corpus: LabelledCorpus
    training_accuracy: float
    validation_accuracy: Optional[float] = None


def fit_lhm_model(
    corpus: LabelledCorpus,
    params: SvmParams,
    master_seed: int,
    cv: bool = False,
    folds: Optional[int] = None,
    workers: Optional[int] = None,
) -> TrainedModel:
    """Optionally pick (c, kernel_gamma) by cross-validation, then fit on the whole corpus"""
    c, gamma = params.c, params.kernel_gamma
    validation = None
    if cv:
        grid = [(cc, gg) for cc in params.c_grid for gg in params.gamma_grid]
        result = cross_validate(
            corpus.data,
            grid,
            params.cv_folds if folds is None else folds,
            derive_seed(master_seed, "cv-folds"),
            params.tol,
            params.max_passes,
            workers,
        )
        (c, gamma), validation = result.best, result.accuracy
    model = train(corpus.data, c, gamma, params.tol, params.max_passes, derive_seed(master_seed, "svm-shuffle"))
    return TrainedModel(model, corpus, accuracy(model, corpus.data), validation)


def train_lhm_model(
    opts: LhmConfig,
    scenario_config: ScenarioConfig,
    master_seed: int,
    cv: bool = False,
    folds: Optional[int] = None,
    jur_opts: Optional[JurOptions] = None,
    cro_opts: Optional[CroOptions] = None,
    workers: Optional[int] = None,
) -> TrainedModel:
    """Load or generate the labelled corpus, then fit"""
    if opts.training_data is not None:
        corpus = LabelledCorpus(TrainingSet.load(opts.training_data), 0, 0)
    else:
        scenarios = generate_training_scenarios(scenario_config, opts.training_scenarios, master_seed)
        corpus = build_training_data(scenarios, jur_opts, cro_opts, scenario_config.reference_power, workers)
    return fit_lhm_model(corpus, opts.svm, master_seed, cv, folds, workers)
