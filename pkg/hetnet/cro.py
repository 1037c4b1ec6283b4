"""
Convex resource optimisation for the MBS-served set

Minimise sum_i c_p p_i + gamma c_w w_i subject to each user's expected
rate w_i log2(1 + p_i k_i) >= R_i, 0 <= p_i <= p_max and sum_i w_i <= W_max.

Two solvers:
- solve_cro_reference prices shared bandwidth with a scalar nu found by
  bisection; for a given nu every user is an independent 1-D search.
- solve_cro_barrier runs the penalised-Lagrangian iteration with a log
  barrier on each reliability slack whose weight is shrunk geometrically.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from hetnet.config import BarrierOpts, CroOptions
from hetnet.errors import ConfigError, InfeasibleError, InteriorStartFailed, NotConvergedError
from hetnet.numerics import bisect_decreasing, safeguarded_newton
from hetnet.pricing import LN2, RATE_NUDGE, min_cost_on_curve, min_rate_requirement
from hetnet.records import write_csv
from hetnet.scenario import Scenario, StationParams, User, expected_rate

logger = logging.getLogger(__name__)

TRACE_CSV_HEADER = ("iteration", "cost", "max_residual", "nu")
MAX_DOUBLINGS = 400


class ServedUser(NamedTuple):
    user: User
    gain: float
    n0: float


@dataclass(frozen=True)
class CroInstance:
    """MBS-served users and the MBS; per-user arrays are derived once"""

    served_users: Tuple[ServedUser, ...]
    mbs: StationParams
    user_ids: np.ndarray = field(init=False, repr=False, compare=False)
    required: np.ndarray = field(init=False, repr=False, compare=False)
    k_eff: np.ndarray = field(init=False, repr=False, compare=False)
    s_max: np.ndarray = field(init=False, repr=False, compare=False)
    r_th: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.served_users, key=lambda su: su.user.id))
        for su in ordered:
            if not su.gain > 0 or not su.n0 > 0:
                raise ConfigError(f"user {su.user.id}: gain and noise must be positive")
        object.__setattr__(self, "served_users", ordered)
        object.__setattr__(self, "user_ids", np.array([su.user.id for su in ordered], dtype=int))
        object.__setattr__(self, "required", np.array([min_rate_requirement(su.user) for su in ordered], dtype=float))
        object.__setattr__(self, "k_eff", np.array([su.gain * su.gain / su.n0 for su in ordered], dtype=float))
        object.__setattr__(self, "s_max", np.log1p(self.mbs.p_max * self.k_eff) / LN2)
        object.__setattr__(self, "r_th", np.array([su.user.r_th for su in ordered], dtype=float))

    @classmethod
    def from_scenario(cls, scenario: Scenario, user_ids: Optional[Iterable[int]] = None) -> "CroInstance":
        wanted = None if user_ids is None else set(user_ids)
        served = [
            ServedUser(u, u.mean_gain[scenario.mbs.id], u.mean_noise)
            for u in scenario.users
            if wanted is None or u.id in wanted
        ]
        return cls(tuple(served), scenario.mbs)

    def subset(self, user_ids: Iterable[int]) -> "CroInstance":
        wanted = set(user_ids)
        return CroInstance(tuple(su for su in self.served_users if su.user.id in wanted), self.mbs)

    def __len__(self) -> int:
        return len(self.served_users)

    @property
    def bandwidth_price(self) -> float:
        return self.mbs.gamma * self.mbs.c_w

    def min_demand(self) -> np.ndarray:
        """Per-user bandwidth needed at full power"""
        with np.errstate(divide="ignore"):
            return np.where(self.required > 0, self.required / self.s_max, 0.0)

    def cost_of(self, p: np.ndarray, w: np.ndarray) -> float:
        return math.fsum(self.mbs.c_p * p + self.bandwidth_price * w)


class TraceRow(NamedTuple):
    iteration: int
    cost: float
    max_residual: float
    nu: float


@dataclass
class BarrierState:
    """One stored iterate; lam < 0 and barrier_weight = max(-lam)"""

    iteration: int
    p: np.ndarray
    w: np.ndarray
    lam: np.ndarray
    barrier_weight: float
    penalty: float


@dataclass
class CroSolution:
    user_ids: np.ndarray
    p: np.ndarray
    w: np.ndarray
    total_cost: float
    multipliers: np.ndarray  # reliability multipliers, one per user
    nu: float  # shared bandwidth price
    iterations: int
    converged: bool
    trace: List[TraceRow] = field(default_factory=list)
    history: List[BarrierState] = field(default_factory=list)

    def allocation(self, user_id: int) -> Tuple[float, float]:
        idx = int(np.searchsorted(self.user_ids, user_id))
        if idx >= len(self.user_ids) or self.user_ids[idx] != user_id:
            raise KeyError(user_id)
        return float(self.p[idx]), float(self.w[idx])

    @property
    def bandwidth_used(self) -> float:
        return math.fsum(self.w)


def empty_solution() -> CroSolution:
    empty = np.zeros(0)
    return CroSolution(np.zeros(0, dtype=int), empty, empty, 0.0, empty, 0.0, 0, True)


def reliability_slack(p: float, w: float, user: User, gain: float, n0: float) -> float:
    return expected_rate(p, w, gain, n0) - min_rate_requirement(user)


def min_bandwidth_demand(inst: CroInstance) -> float:
    return math.fsum(inst.min_demand())


def blocking_users(inst: CroInstance) -> List[int]:
    """
    Users to drop, largest minimum demand first, until the rest fit in W_max
    """
    demand = inst.min_demand()
    order = sorted(range(len(inst)), key=lambda i: (-demand[i], inst.user_ids[i]))
    kept = set(range(len(inst)))
    blocking = []
    for i in order:
        if fits_bandwidth(math.fsum(demand[j] for j in sorted(kept)), inst.mbs.w_max):
            break
        blocking.append(int(inst.user_ids[i]))
        kept.discard(i)
    return blocking


def fits_bandwidth(demand: float, w_max: float) -> bool:
    # at full power every user still pays the rate nudge
    return demand * (1 + 2 * RATE_NUDGE) < w_max


def _check_feasible(inst: CroInstance, error=InfeasibleError) -> None:
    if not fits_bandwidth(min_bandwidth_demand(inst), inst.mbs.w_max):
        raise error("bandwidth exhausted even at full power", blocking_users(inst))


def _grow_price(bandwidth_at, w_max: float, start: float) -> float:
    nu = start
    for _ in range(MAX_DOUBLINGS):
        if bandwidth_at(nu) <= w_max:
            return nu
        nu *= 2
    raise NotConvergedError(f"bandwidth price did not bracket W_max={w_max}")


def solve_cro_reference(inst: CroInstance, opts: Optional[CroOptions] = None) -> CroSolution:
    """
    KKT solve through the shared-bandwidth price nu.

    For a trial nu each user minimises c_p p + (gamma c_w + nu) w on its
    rate curve. nu = 0 when the unpriced demand fits; otherwise nu is
    bisected until sum w(nu) sits within bandwidth_tol * W_max below W_max.
    """
    opts = opts or CroOptions()
    if len(inst) == 0:
        return empty_solution()
    _check_feasible(inst)
    mbs = inst.mbs
    beta = inst.bandwidth_price

    def allocate(nu: float) -> Tuple[np.ndarray, np.ndarray]:
        return min_cost_on_curve(inst.required, inst.k_eff, mbs.p_max, mbs.c_p, beta + nu, opts.search_tol)

    def bandwidth_at(nu: float) -> float:
        return math.fsum(allocate(nu)[1])

    iterations = 1
    nu = 0.0
    if bandwidth_at(0.0) > mbs.w_max:
        hi = _grow_price(bandwidth_at, mbs.w_max, max(beta, 1e-12))
        nu, _ = bisect_decreasing(bandwidth_at, mbs.w_max, hi / 2 if hi > max(beta, 1e-12) else 0.0, hi, opts.bandwidth_tol)
        iterations += 1
    p, w = allocate(nu)
    ell = np.log1p(p * inst.k_eff) / LN2
    with np.errstate(divide="ignore", invalid="ignore"):
        multipliers = np.where(ell > 0, (beta + nu) / ell, 0.0)
    solution = CroSolution(
        user_ids=inst.user_ids.copy(),
        p=p,
        w=w,
        total_cost=inst.cost_of(p, w),
        multipliers=multipliers,
        nu=float(nu),
        iterations=iterations,
        converged=True,
    )
    logger.debug("[CRO] reference: %d users, nu=%.6g, cost=%.6g", len(inst), nu, solution.total_cost)
    return solution


def penalized_lagrangian(inst: CroInstance, p: np.ndarray, w: np.ndarray, lam: np.ndarray) -> float:
    """sum_i c_p p_i + gamma c_w w_i + lam_i ln g_i; +inf outside the interior"""
    g = w * np.log1p(p * inst.k_eff) / LN2 - inst.required
    if np.any(g <= 0):
        return math.inf
    return math.fsum(inst.mbs.c_p * p + inst.bandwidth_price * w + lam * np.log(g))


def lagrangian_gradient(
    inst: CroInstance, p: np.ndarray, w: np.ndarray, lam: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Analytic partials of penalized_lagrangian with respect to p and w"""
    k = inst.k_eff
    ell = np.log1p(p * k) / LN2
    g = w * ell - inst.required
    d_p = inst.mbs.c_p + lam * w * k / ((1 + p * k) * LN2 * g)
    d_w = inst.bandwidth_price + lam * ell / g
    return d_p, d_w


def _centre(inst: CroInstance, weight: np.ndarray, band_price: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Minimiser of c_p p + B w - t ln g for each user at fixed barrier weight t.

    The w-condition gives w = R / l + t / B with l = log2(1 + p k); putting
    it into the p-condition leaves one increasing equation in s = l:
    c_p s 2^s ln2 / (B k) - R / s - t / B = 0, solved by safeguarded Newton
    and capped at s_max.
    """
    c_p = inst.mbs.c_p
    R, k, top = inst.required, inst.k_eff, inst.s_max
    B = band_price

    def f(s: np.ndarray) -> np.ndarray:
        return c_p * s * np.exp2(s) * LN2 / (B * k) - R / s - weight / B

    def fprime(s: np.ndarray) -> np.ndarray:
        return c_p * LN2 * np.exp2(s) * (1 + s * LN2) / (B * k) + R / (s * s)

    capped = f(top) <= 0
    s = safeguarded_newton(f, fprime, top * 1e-12, top)
    p = np.where(capped, inst.mbs.p_max, np.minimum(np.expm1(s * LN2) / k, inst.mbs.p_max))
    ell = np.log1p(p * k) / LN2
    w = R / ell + weight / B
    return p, w


def _centre_with_price(inst: CroInstance, weight: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray, float]:
    beta = inst.bandwidth_price
    w_max = inst.mbs.w_max

    def bandwidth_at(nu: float) -> float:
        return math.fsum(_centre(inst, weight, beta + nu)[1])

    nu = 0.0
    if bandwidth_at(0.0) > w_max:
        start = max(beta, 1e-12)
        hi = _grow_price(bandwidth_at, w_max, start)
        nu, _ = bisect_decreasing(bandwidth_at, w_max, hi / 2 if hi > start else 0.0, hi, tol)
    p, w = _centre(inst, weight, beta + nu)
    return p, w, nu


def solve_cro_barrier(
    inst: CroInstance, opts: Optional[BarrierOpts] = None, cro_opts: Optional[CroOptions] = None
) -> CroSolution:
    """
    Barrier-penalised Lagrangian iteration.

    The start is the uncoupled per-user optimum inflated by opts.inflation,
    with lam_i = -g_i B / l_i so the start is already w-stationary. Each
    outer iteration shrinks lam by kappa, then updates p (centering
    equation) and w (closed form) under the shared bandwidth price. Stops
    when the largest relative block change drops below opts.tol.
    """
    opts = opts or BarrierOpts()
    cro_opts = cro_opts or CroOptions()
    if len(inst) == 0:
        return empty_solution()
    beta = inst.bandwidth_price
    if not beta > 0:
        raise ConfigError("barrier iteration needs a positive bandwidth price gamma * c_w")
    _check_feasible(inst, InteriorStartFailed)
    mbs = inst.mbs

    p0, w0 = min_cost_on_curve(inst.required, inst.k_eff, mbs.p_max, mbs.c_p, beta, cro_opts.search_tol)
    p = np.minimum(p0 * opts.inflation, mbs.p_max)
    w = w0 * opts.inflation
    ell = np.log1p(p * inst.k_eff) / LN2
    g = w * ell - inst.required
    if np.any(g <= 0):
        bad = inst.user_ids[g <= 0]
        raise InteriorStartFailed("inflated start is not strictly interior", bad.tolist())
    weight = g * beta / ell
    nu = 0.0

    history = [BarrierState(0, p, w, -weight, float(np.max(weight)), math.fsum(-weight * np.log(g)))]
    trace = [TraceRow(0, inst.cost_of(p, w), math.inf, nu)]
    converged = False
    iteration = 0
    for iteration in range(1, opts.max_iters + 1):
        weight = weight * opts.kappa
        p_new, w_new, nu = _centre_with_price(inst, weight, cro_opts.bandwidth_tol)
        g = w_new * np.log1p(p_new * inst.k_eff) / LN2 - inst.required
        if np.any(g <= 0):
            # barrier weight has fallen below rounding; keep the last interior iterate
            iteration -= 1
            converged = True
            break
        change = max(
            float(np.max(np.abs(p_new - p) / np.maximum(p_new, 1e-300))),
            float(np.max(np.abs(w_new - w) / np.maximum(w_new, 1e-300))),
        )
        p, w = p_new, w_new
        history.append(
            BarrierState(iteration, p, w, -weight, float(np.max(weight)), math.fsum(-weight * np.log(g)))
        )
        trace.append(TraceRow(iteration, inst.cost_of(p, w), change, nu))
        if change < opts.tol:
            converged = True
            break

    g = w * np.log1p(p * inst.k_eff) / LN2 - inst.required
    solution = CroSolution(
        user_ids=inst.user_ids.copy(),
        p=p,
        w=w,
        total_cost=inst.cost_of(p, w),
        multipliers=history[-1].lam * -1 / g,
        nu=float(nu),
        iterations=iteration,
        converged=converged,
        trace=trace,
        history=history,
    )
    if not converged:
        raise NotConvergedError(f"barrier iteration did not converge in {opts.max_iters} iterations", solution)

    logger.debug("[CRO] barrier: %d users, %d iterations, cost=%.6g", len(inst), iteration, solution.total_cost)
    if opts.verify_against_reference:
        reference = solve_cro_reference(inst, cro_opts)
        gap = abs(solution.total_cost - reference.total_cost)
        if gap > opts.match_tol * max(reference.total_cost, 1e-300):
            raise NotConvergedError(
                f"barrier cost {solution.total_cost:.9g} differs from reference {reference.total_cost:.9g}",
                solution,
            )
    return solution


class KktReport(NamedTuple):
    stationarity_p: float
    stationarity_w: float
    complementary_slackness: float
    activity: float
    passed: bool


def check_kkt(inst: CroInstance, sol: CroSolution, tol: float = 1e-5) -> KktReport:
    """
    Relative KKT residuals of a CRO solution.

    Stationarity uses the stored multipliers m_i and nu:
    c_p = m_i w_i k_i / ((1 + p_i k_i) ln2) (one-sided when p_i = p_max) and
    gamma c_w + nu = m_i log2(1 + p_i k_i).
    """
    if len(inst) == 0:
        return KktReport(0.0, 0.0, 0.0, 0.0, True)
    mbs = inst.mbs
    k = inst.k_eff
    p, w, m = sol.p, sol.w, sol.multipliers
    ell = np.log1p(p * k) / LN2
    price = inst.bandwidth_price + sol.nu

    marginal_p = m * w * k / ((1 + p * k) * LN2)
    gap_p = (mbs.c_p - marginal_p) / max(mbs.c_p, 1e-300)
    at_cap = p >= mbs.p_max * (1 - 1e-12)
    # at the power cap only a cheaper-than-marginal unit cost is allowed
    residual_p = np.where(at_cap, np.maximum(gap_p, 0.0), np.abs(gap_p))
    residual_w = np.abs(price - m * ell) / max(price, 1e-300)
    slackness = sol.nu * abs(mbs.w_max - sol.bandwidth_used) / max(sol.total_cost, 1e-300)
    slack = w * ell - inst.required
    activity = np.abs(slack) / inst.r_th
    if np.any(slack < -1e-9 * inst.r_th):
        activity = np.maximum(activity, 1.0)

    report = KktReport(
        stationarity_p=float(np.max(residual_p)),
        stationarity_w=float(np.max(residual_w)),
        complementary_slackness=float(slackness),
        activity=float(np.max(activity)),
        passed=False,
    )
    passed = max(report[:4]) < tol
    return report._replace(passed=passed)


def write_trace_csv(solution: CroSolution, path: Path) -> Path:
    return write_csv(path, TRACE_CSV_HEADER, solution.trace)
