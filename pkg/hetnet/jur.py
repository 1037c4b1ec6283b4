"""
Joint user association and resource allocation

solve_jur_bnb is the exact solver (depth-first branch and bound over the
association vector), solve_jur_exhaustive enumerates every vector for small
instances, and solve_dsm is the direct-serving baseline.
"""
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hetnet.config import CroOptions, JurOptions
from hetnet.cro import CroInstance, CroSolution, blocking_users, empty_solution, solve_cro_reference
from hetnet.errors import InfeasibleError, TooLargeError
from hetnet.pricing import BidTable, min_cost_on_curve
from hetnet.records import write_csv
from hetnet.scenario import Scenario, delay_blocked, delay_feasible, delay_of

logger = logging.getLogger(__name__)

SOLUTION_CSV_HEADER = ("user_id", "mu", "serving_station", "p", "w", "user_cost", "delay", "served_flag")
EXACT = "exact"
BOUND_GAP = "bound-gap"


@dataclass
class Association:
    """mu[i] = 1 for MBS-served users, 0 for offloaded ones"""

    mu: Dict[int, int]
    serving: Dict[int, int]  # station id for every user

    def mbs_served(self) -> List[int]:
        return sorted(u for u, m in self.mu.items() if m == 1)

    def offloaded(self) -> List[int]:
        return sorted(u for u, m in self.mu.items() if m == 0)

    def as_vector(self) -> np.ndarray:
        return np.array([self.mu[u] for u in sorted(self.mu)], dtype=int)


@dataclass
class JurSolution:
    scenario: Scenario
    bids: BidTable
    association: Association
    resources: CroSolution
    total_cost: float
    wall_time: float
    optimality: str = EXACT
    gap: float = 0.0
    nodes: int = 0
    unserved: Tuple[int, ...] = ()

    @property
    def n_users(self) -> int:
        return len(self.scenario.users)

    @property
    def offloaded_count(self) -> int:
        return len(self.association.offloaded())

    @property
    def served_count(self) -> int:
        return sum(1 for row in self.allocations() if row[-1])

    @property
    def service_rate(self) -> float:
        return self.served_count / self.n_users if self.n_users else 1.0

    def user_costs(self) -> Dict[int, float]:
        return {row[0]: row[5] for row in self.allocations()}

    def allocations(self) -> List[tuple]:
        """One row per user in SOLUTION_CSV_HEADER order"""
        mbs = self.scenario.mbs
        beta = mbs.gamma * mbs.c_w
        unserved = set(self.unserved)
        rows = []
        for user in sorted(self.scenario.users, key=lambda u: u.id):
            mu = self.association.mu[user.id]
            if user.id in unserved:
                rows.append((user.id, 1, "", 0.0, 0.0, 0.0, delay_of(user, True, self.scenario.delay), 0))
                continue
            if mu == 0:
                bid = self.bids.best(user.id)
                p, w, cost = bid.p, bid.w, bid.total
                station = bid.sbs_id
            else:
                p, w = self.resources.allocation(user.id)
                cost = mbs.c_p * p + beta * w
                station = mbs.id
            delay = delay_of(user, mu == 1, self.scenario.delay)
            served = int(delay_feasible(user, mu == 1, self.scenario.delay))
            rows.append((user.id, mu, station, p, w, cost, delay, served))
        return rows

    def audit_objective(self) -> float:
        """Objective recomputed from (mu, p, w, bids)"""
        mbs = self.scenario.mbs
        terms = []
        for user_id in self.association.mbs_served():
            if user_id in self.unserved:
                continue
            p, w = self.resources.allocation(user_id)
            terms.append(mbs.c_p * p + mbs.gamma * mbs.c_w * w)
        terms.extend(self.bids.best(u).total for u in self.association.offloaded())
        return math.fsum(terms)

    def audit_constraints(self) -> List[str]:
        """Violated constraints, empty when the solution is feasible"""
        problems = []
        scenario = self.scenario
        mbs = scenario.mbs
        unserved = set(self.unserved)
        for user in scenario.users:
            mu = self.association.mu[user.id]
            if user.id in unserved:
                continue
            if mu == 0:
                if not self.bids.offloadable(user.id):
                    problems.append(f"user {user.id} offloaded without a bid")
                if not delay_feasible(user, False, scenario.delay):
                    problems.append(f"user {user.id} offloaded past its delay threshold")
                continue
            if not delay_feasible(user, True, scenario.delay):
                problems.append(f"user {user.id} served by the MBS past its delay threshold")
            p, w = self.resources.allocation(user.id)
            gain = user.mean_gain[mbs.id]
            rate = w * math.log1p(p * gain * gain / user.mean_noise) / math.log(2)
            required = user.r_th * (1 - user.delta_r)
            if rate < required - 1e-6 * user.r_th:
                problems.append(f"user {user.id} rate {rate:.6g} below {required:.6g}")
            if p > mbs.p_max * (1 + 1e-12) or p < 0:
                problems.append(f"user {user.id} power {p:.6g} outside [0, {mbs.p_max}]")
        if self.resources.bandwidth_used > mbs.w_max * (1 + 1e-9):
            problems.append(f"bandwidth {self.resources.bandwidth_used:.6g} exceeds {mbs.w_max:.6g}")
        return problems


def write_solution_csv(solution: JurSolution, path: Path, extra: Optional[Dict[str, object]] = None) -> Path:
    header = SOLUTION_CSV_HEADER
    rows = solution.allocations()
    if extra:
        header = header + tuple(extra)
        rows = [row + tuple(extra.values()) for row in rows]
    return write_csv(path, header, rows)


@dataclass
class _Problem:
    """Users split into pinned (MBS only) and free, with per-user prices"""

    scenario: Scenario
    bids: BidTable
    instance: CroInstance
    pinned: List[int]
    free: List[int]
    bid_total: Dict[int, float] = field(default_factory=dict)
    standalone: Dict[int, float] = field(default_factory=dict)


def _prepare(scenario: Scenario, bids: BidTable, cro_opts: CroOptions) -> _Problem:
    late = delay_blocked(scenario)
    if late:
        raise InfeasibleError("delay threshold missed even without offloading", late)
    instance = CroInstance.from_scenario(scenario)
    pinned, free = [], []
    for user in sorted(scenario.users, key=lambda u: u.id):
        if bids.offloadable(user.id) and delay_feasible(user, False, scenario.delay):
            free.append(user.id)
        else:
            pinned.append(user.id)
    problem = _Problem(scenario, bids, instance, pinned, free)
    problem.bid_total = {u: bids.best_total(u) for u in free}
    costs = _standalone_costs(instance.subset(free), 0.0, cro_opts)
    problem.standalone = dict(zip(free, costs))
    return problem


def _standalone_costs(inst: CroInstance, nu: float, cro_opts: CroOptions) -> List[float]:
    """Per-user cost on the MBS at bandwidth price gamma c_w + nu, including the nu term"""
    if len(inst) == 0:
        return []
    mbs = inst.mbs
    price = inst.bandwidth_price + nu
    p, w = min_cost_on_curve(inst.required, inst.k_eff, mbs.p_max, mbs.c_p, price, cro_opts.search_tol)
    return list(mbs.c_p * p + price * w)


def _solve_set(problem: _Problem, mbs_users: Sequence[int], cro_opts: CroOptions) -> Optional[CroSolution]:
    inst = problem.instance.subset(mbs_users)
    try:
        return solve_cro_reference(inst, cro_opts)
    except InfeasibleError:
        return None


def _assemble(
    problem: _Problem,
    mbs_users: Sequence[int],
    resources: CroSolution,
    started: float,
    **extra,
) -> JurSolution:
    mbs_set = set(mbs_users)
    mu, serving = {}, {}
    for user in problem.scenario.users:
        if user.id in mbs_set:
            mu[user.id], serving[user.id] = 1, problem.scenario.mbs.id
        else:
            mu[user.id], serving[user.id] = 0, problem.bids.best(user.id).sbs_id
    offloaded = sorted(set(mu) - mbs_set)
    total = math.fsum([resources.total_cost] + [problem.bids.best_total(u) for u in offloaded])
    return JurSolution(
        scenario=problem.scenario,
        bids=problem.bids,
        association=Association(mu, serving),
        resources=resources,
        total_cost=total,
        wall_time=round(time.perf_counter() - started, 3),
        **extra,
    )


def _require_feasible_pinned(problem: _Problem, cro_opts: CroOptions) -> None:
    inst = problem.instance.subset(problem.pinned)
    if _solve_set(problem, problem.pinned, cro_opts) is None:
        raise InfeasibleError("users that cannot be offloaded exhaust the MBS bandwidth", blocking_users(inst))


def solve_jur_exhaustive(
    scenario: Scenario,
    bids: BidTable,
    opts: Optional[JurOptions] = None,
    cro_opts: Optional[CroOptions] = None,
) -> JurSolution:
    """Enumerate every feasible association vector; N is capped by opts.exact_limit"""
    opts = opts or JurOptions()
    cro_opts = cro_opts or CroOptions()
    if len(scenario.users) > opts.exact_limit:
        raise TooLargeError(f"{len(scenario.users)} users exceed the enumeration limit of {opts.exact_limit}")
    started = time.perf_counter()
    problem = _prepare(scenario, bids, cro_opts)

    best_cost, best = math.inf, None
    count = 0
    for choice in itertools.product((0, 1), repeat=len(problem.free)):
        count += 1
        mbs_users = problem.pinned + [u for u, m in zip(problem.free, choice) if m == 1]
        resources = _solve_set(problem, mbs_users, cro_opts)
        if resources is None:
            continue
        offloaded = [u for u, m in zip(problem.free, choice) if m == 0]
        cost = math.fsum([resources.total_cost] + [problem.bid_total[u] for u in offloaded])
        if cost < best_cost:
            best_cost, best = cost, (mbs_users, resources)
    if best is None:
        _require_feasible_pinned(problem, cro_opts)
        raise InfeasibleError("no feasible association")
    solution = _assemble(problem, best[0], best[1], started, nodes=count)
    logger.info("[JUR] exhaustive: %d assignments, cost %.6g", count, solution.total_cost)
    return solution


@dataclass
class _Node:
    depth: int
    mbs: Tuple[int, ...]  # free users decided for the MBS
    offloaded: Tuple[int, ...]
    parent_bound: float


def solve_jur_bnb(
    scenario: Scenario,
    bids: BidTable,
    opts: Optional[JurOptions] = None,
    cro_opts: Optional[CroOptions] = None,
) -> JurSolution:
    """
    Depth-first branch and bound on the association vector.

    Node bound: CRO dual value of the decided MBS set at its bandwidth
    price nu plus the bids of decided offloads plus, for each undecided user,
    min(bid, its own MBS cost at price gamma c_w + nu). Leaves are the nodes
    whose free users are all decided; their CRO solve is the node solve.
    """
    opts = opts or JurOptions()
    cro_opts = cro_opts or CroOptions()
    started = time.perf_counter()
    problem = _prepare(scenario, bids, cro_opts)
    _require_feasible_pinned(problem, cro_opts)

    gap_of = {u: abs(problem.standalone[u] - problem.bid_total[u]) for u in problem.free}
    order = sorted(problem.free, key=lambda u: (-gap_of[u], u))
    n_free = len(order)
    w_max = scenario.mbs.w_max

    incumbent_cost, incumbent = math.inf, None
    stack = [_Node(0, (), (), -math.inf)]
    nodes = 0
    while stack:
        if nodes >= opts.node_budget:
            break
        node = stack.pop()
        if node.parent_bound >= incumbent_cost:
            continue
        nodes += 1
        mbs_users = problem.pinned + list(node.mbs)
        resources = _solve_set(problem, mbs_users, cro_opts)
        if resources is None:
            continue
        decided_bids = math.fsum(problem.bid_total[u] for u in node.offloaded)
        if node.depth == n_free:
            cost = math.fsum([resources.total_cost, decided_bids])
            if cost < incumbent_cost:
                incumbent_cost, incumbent = cost, (mbs_users, resources)
            continue

        nu = resources.nu
        undecided = order[node.depth:]
        dual = resources.total_cost - nu * (w_max - resources.bandwidth_used)
        own = dict(zip(sorted(undecided), _standalone_costs(problem.instance.subset(undecided), nu, cro_opts)))
        optimistic = math.fsum(min(problem.bid_total[u], own[u]) for u in undecided)
        bound = dual + decided_bids + optimistic
        if bound >= incumbent_cost:
            continue

        user = order[node.depth]
        to_mbs = _Node(node.depth + 1, node.mbs + (user,), node.offloaded, bound)
        to_sbs = _Node(node.depth + 1, node.mbs, node.offloaded + (user,), bound)
        # cheaper child is explored first; ties go to offloading
        if problem.bid_total[user] <= own[user]:
            stack.extend([to_mbs, to_sbs])
        else:
            stack.extend([to_sbs, to_mbs])

    optimality, gap = EXACT, 0.0
    if stack:
        if incumbent is None:
            # every free user offloaded is always feasible once the pinned set is
            resources = _solve_set(problem, problem.pinned, cro_opts)
            incumbent = (list(problem.pinned), resources)
            incumbent_cost = math.fsum([resources.total_cost] + [problem.bid_total[u] for u in problem.free])
        lower = min(n.parent_bound for n in stack)
        gap = max(incumbent_cost - lower, 0.0)
        optimality = BOUND_GAP if gap > 0 else EXACT
        logger.warning("[JUR] node budget %d exhausted, gap %.6g", opts.node_budget, gap)
    if incumbent is None:
        raise InfeasibleError("no feasible association")

    solution = _assemble(problem, incumbent[0], incumbent[1], started, optimality=optimality, gap=gap, nodes=nodes)
    logger.info(
        "[JUR] %d nodes, %d/%d offloaded, cost %.6g",
        nodes,
        solution.offloaded_count,
        solution.n_users,
        solution.total_cost,
    )
    return solution


def solve_dsm(scenario: Scenario, bids: Optional[BidTable] = None, cro_opts: Optional[CroOptions] = None) -> JurSolution:
    """
    Direct serving: every user on the MBS.

    Users past their delay threshold are unserved from the start. While the
    full-power bandwidth floor of the rest does not fit, the user with the
    largest floor is dropped and marked unserved.
    """
    cro_opts = cro_opts or CroOptions()
    started = time.perf_counter()
    late = set(delay_blocked(scenario))
    instance = CroInstance.from_scenario(scenario, [u.id for u in scenario.users if u.id not in late])
    dropped = sorted(late) + blocking_users(instance)
    kept = [u for u in instance.user_ids.tolist() if u not in set(dropped)]
    resources = solve_cro_reference(instance.subset(kept), cro_opts) if kept else empty_solution()
    mu = {u.id: 1 for u in scenario.users}
    serving = {u.id: scenario.mbs.id for u in scenario.users}
    solution = JurSolution(
        scenario=scenario,
        bids=bids if bids is not None else BidTable(bids={}, best_index={}),
        association=Association(mu, serving),
        resources=resources,
        total_cost=resources.total_cost,
        wall_time=round(time.perf_counter() - started, 3),
        unserved=tuple(sorted(dropped)),
    )
    if dropped:
        logger.info("[DSM] bandwidth exhausted, %d users dropped", len(dropped))
    return solution
