"""
Hand-built stations, users and instances for tests
"""
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from hetnet.config import ChannelModel, DelayParams, StationConfig
from hetnet.cro import CroInstance, ServedUser
from hetnet.pricing import min_cost_on_curve
from hetnet.scenario import MBS_ID, Scenario, StationKind, StationParams, User, channel_gain, distance

NOISE = 3e-8


def mbs(position: Tuple[float, float] = (0.0, 0.0), radius: float = 2000.0, **overrides) -> StationParams:
    params = StationConfig().model_dump()
    params.update(overrides)
    return StationParams(id=MBS_ID, kind=StationKind.MBS, position=position, coverage_radius=radius, **params)


def sbs(station_id: int, position: Tuple[float, float], radius: float = 600.0, **overrides) -> StationParams:
    params = StationConfig(w_max=2e8, reward_markup=0.1).model_dump()
    params.update(overrides)
    return StationParams(id=station_id, kind=StationKind.SBS, position=position, coverage_radius=radius, **params)


def placed_user(
    user_id: int,
    position: Tuple[float, float],
    stations: Sequence[StationParams],
    channel: ChannelModel = ChannelModel(),
    r_th: float = 5e6,
    d_th: float = 10e-3,
    delta_r: float = 0.05,
    delta_d: float = 0.05,
    noise: float = NOISE,
) -> User:
    """User with gains from the path-loss model towards every covering station"""
    gains = {}
    for s in stations:
        d = distance(position, s.position)
        if s.kind is StationKind.MBS or d <= s.coverage_radius:
            gains[s.id] = channel_gain(d, channel)
    return User(
        id=user_id,
        position=position,
        r_th=r_th,
        d_th=d_th,
        delta_r=delta_r,
        delta_d=delta_d,
        mean_gain=gains,
        mean_noise=noise,
    )


def world(
    macro: StationParams,
    smalls: Iterable[StationParams] = (),
    users: Iterable[User] = (),
    delay: DelayParams = DelayParams(),
    seed: int = 0,
) -> Scenario:
    return Scenario(mbs=macro, sbss=tuple(smalls), users=tuple(users), delay=delay, seed=seed)


def random_users(rng: np.random.Generator, n: int, stations: Sequence[StationParams], radius: float = 2000.0):
    users = []
    for i in range(n):
        r = radius * np.sqrt(rng.random())
        theta = 2 * np.pi * rng.random()
        users.append(
            placed_user(
                i,
                (float(r * np.cos(theta)), float(r * np.sin(theta))),
                stations,
                r_th=float(rng.uniform(1e6, 1e7)),
                delta_r=float(rng.uniform(0.01, 0.1)),
            )
        )
    return users


def uncoupled_demand(inst: CroInstance) -> float:
    mbs_params = inst.mbs
    _, w = min_cost_on_curve(inst.required, inst.k_eff, mbs_params.p_max, mbs_params.c_p, inst.bandwidth_price)
    return float(np.sum(w))


def random_cro_instance(seed: int, n: int, w_fraction: Optional[float] = None) -> CroInstance:
    """
    n random MBS users; with w_fraction the MBS budget is that share of the
    uncoupled demand, raised if needed so the full-power floor still fits
    """
    rng = np.random.default_rng(seed)
    macro = mbs()
    users = random_users(rng, n, [macro])
    inst = CroInstance(tuple(ServedUser(u, u.mean_gain[MBS_ID], u.mean_noise) for u in users), macro)
    if w_fraction is None:
        return inst
    floor = float(np.sum(inst.min_demand()))
    budget = max(w_fraction * uncoupled_demand(inst), 1.02 * floor)
    return CroInstance(inst.served_users, macro.model_copy(update={"w_max": budget}))
