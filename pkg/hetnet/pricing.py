"""
SBS bids for offloaded users and best-bid selection
"""
import logging
import math
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from hetnet.numerics import golden_section
from hetnet.records import write_csv
from hetnet.scenario import Scenario, StationParams, User, distance

logger = logging.getLogger(__name__)

LN2 = math.log(2)
# rates are bought a hair above the requirement so rounding never leaves them short
RATE_NUDGE = 1e-12
SEARCH_TOL = 1e-10

BID_CSV_HEADER = ("user_id", "sbs_id", "p", "w", "resource_cost", "reward", "total", "is_best")


class CurvePoint(NamedTuple):
    p: float
    w: float
    cost: float


class Bid(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    sbs_id: int
    user_id: int
    resource_cost: float = Field(ge=0)
    reward: float = Field(ge=0)
    total: float
    p: float = Field(ge=0)
    w: float = Field(ge=0)

    @model_validator(mode="after")
    def _total_is_sum(self) -> "Bid":
        if self.total != self.resource_cost + self.reward:
            raise ValueError("bid total must equal resource_cost + reward")
        return self


class BidTable(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    bids: Dict[int, Tuple[Bid, ...]]
    best_index: Dict[int, Optional[int]]

    def best(self, user_id: int) -> Optional[Bid]:
        idx = self.best_index.get(user_id)
        return None if idx is None else self.bids[user_id][idx]

    def best_total(self, user_id: int) -> float:
        bid = self.best(user_id)
        return math.inf if bid is None else bid.total

    def offloadable(self, user_id: int) -> bool:
        return self.best_index.get(user_id) is not None

    def to_rows(self) -> List[tuple]:
        rows = []
        for user_id in sorted(self.bids):
            best = self.best_index[user_id]
            for k, bid in enumerate(self.bids[user_id]):
                rows.append(
                    (user_id, bid.sbs_id, bid.p, bid.w, bid.resource_cost, bid.reward, bid.total, int(k == best))
                )
        return rows


def min_rate_requirement(user: User) -> float:
    return user.r_th * (1 - user.delta_r)


def min_cost_on_curve(
    required: np.ndarray,
    k_eff: np.ndarray,
    p_max: np.ndarray,
    c_p: float,
    band_price: float,
    tol: float = SEARCH_TOL,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cheapest (p, w) on each user's rate curve w * log2(1 + p k) = R.

    With s = log2(1 + p k) the cost c_p p + B w becomes
    c_p (2^s - 1) / k + B R / s, convex on (0, s_max] where
    s_max = log2(1 + p_max k). band_price is B, the full price of one Hz
    (gamma c_w plus any shared-bandwidth price). Users with R = 0 get (0, 0).
    """
    required = np.atleast_1d(np.asarray(required, dtype=float))
    k_eff = np.broadcast_to(np.asarray(k_eff, dtype=float), required.shape)
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), required.shape)
    s_max = np.log1p(p_max * k_eff) / LN2
    p = np.zeros_like(required)
    w = np.zeros_like(required)
    active = (required > 0) & (s_max > 0)
    if not np.any(active):
        return p, w

    R, k, top, cap = required[active], k_eff[active], s_max[active], p_max[active]

    def cost(s: np.ndarray) -> np.ndarray:
        return c_p * np.expm1(s * LN2) / k + band_price * R / s

    s = golden_section(cost, top * 1e-15, top, tol)
    # cost still falling at s_max: the power cap binds
    capped = c_p * LN2 * np.exp2(top) / k - band_price * R / (top * top) <= 0
    p_active = np.where(capped, cap, np.minimum(np.expm1(s * LN2) / k, cap))
    p[active] = p_active
    w[active] = R / (np.log1p(p_active * k) / LN2) * (1 + RATE_NUDGE)
    return p, w


def _curve_inputs(user: User, station: StationParams, gain: float, n0: float) -> Tuple[float, float, float]:
    k = gain * gain / n0
    return min_rate_requirement(user), k, math.log1p(station.p_max * k) / LN2


def _covers(sbs: StationParams, user: User) -> bool:
    return distance(user.position, sbs.position) <= sbs.coverage_radius


def per_user_min_cost(user: User, station: StationParams, gain: float, n0: float) -> Optional[CurvePoint]:
    """Single-user cost minimum at a station; None when no power can reach the user"""
    required, k, s_max = _curve_inputs(user, station, gain, n0)
    if required > 0 and not s_max > 0:
        return None
    p, w = min_cost_on_curve(required, k, station.p_max, station.c_p, station.gamma * station.c_w)
    p, w = float(p[0]), float(w[0])
    return CurvePoint(p, w, station.c_p * p + station.gamma * station.c_w * w)


def compute_bid(sbs: StationParams, user: User) -> Optional[Bid]:
    gain = user.mean_gain.get(sbs.id)
    if gain is None:
        return None
    if not _covers(sbs, user):
        return None
    point = per_user_min_cost(user, sbs, gain, user.mean_noise)
    if point is None:
        return None
    reward = sbs.reward_markup * point.cost
    return Bid(
        sbs_id=sbs.id,
        user_id=user.id,
        resource_cost=point.cost,
        reward=reward,
        total=point.cost + reward,
        p=point.p,
        w=point.w,
    )


def build_bid_table(scenario: Scenario) -> BidTable:
    """
    Every valid bid per user, lowest total marked best.

    Each SBS prices all users it covers in one vectorised search; ties on
    total go to the lowest sbs id.
    """
    per_user: Dict[int, List[Bid]] = {u.id: [] for u in scenario.users}
    for sbs in sorted(scenario.sbss, key=lambda s: s.id):
        covered = [u for u in scenario.users if sbs.id in u.mean_gain and _covers(sbs, u)]
        if not covered:
            continue
        inputs = np.array([_curve_inputs(u, sbs, u.mean_gain[sbs.id], u.mean_noise) for u in covered])
        required, k, s_max = inputs[:, 0], inputs[:, 1], inputs[:, 2]
        p, w = min_cost_on_curve(required, k, sbs.p_max, sbs.c_p, sbs.gamma * sbs.c_w)
        for user, pi, wi, top in zip(covered, p, w, s_max):
            if not top > 0:
                continue
            resource = sbs.c_p * float(pi) + sbs.gamma * sbs.c_w * float(wi)
            reward = sbs.reward_markup * resource
            per_user[user.id].append(
                Bid(
                    sbs_id=sbs.id,
                    user_id=user.id,
                    resource_cost=resource,
                    reward=reward,
                    total=resource + reward,
                    p=float(pi),
                    w=float(wi),
                )
            )

    best_index: Dict[int, Optional[int]] = {}
    for user_id, bids in per_user.items():
        best = None
        for k, bid in enumerate(bids):
            if best is None or bid.total < bids[best].total:
                best = k
        best_index[user_id] = best
    table = BidTable(bids={u: tuple(b) for u, b in per_user.items()}, best_index=best_index)
    logger.info(
        "[PRICING] %d bids for %d users, %d offloadable",
        sum(len(b) for b in per_user.values()),
        len(per_user),
        sum(1 for i in best_index.values() if i is not None),
    )
    return table


def write_bid_csv(table: BidTable, path: Path) -> Path:
    return write_csv(path, BID_CSV_HEADER, table.to_rows())
