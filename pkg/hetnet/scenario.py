"""
HetNet world model: stations, users, channel and delay, plus seeded
scenario generation
"""
import logging
import math
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from hetnet.config import ChannelModel, DelayParams, ScenarioConfig, StationConfig
from hetnet.errors import ConfigError

logger = logging.getLogger(__name__)

MBS_ID = 0
MAX_DROP_ATTEMPTS = 10_000
FEATURE_NAMES = ("x", "d_th", "r_th", "delta_d", "delta_r", "snr")

Position = Tuple[float, float]
ArrayLike = Union[float, np.ndarray]


class StationKind(str, Enum):
    MBS = "MBS"
    SBS = "SBS"


class StationParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: int = Field(ge=0)
    kind: StationKind
    position: Position
    coverage_radius: float = Field(gt=0)  # ft
    p_max: float = Field(gt=0)  # W
    w_max: float = Field(ge=0)  # Hz
    c_p: float = Field(ge=0)
    c_w: float = Field(ge=0)
    gamma: float = Field(gt=0)
    reward_markup: float = Field(default=0.0, ge=0)


class User(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: int = Field(ge=0)
    position: Position
    r_th: float = Field(gt=0)  # bit/s
    d_th: float = Field(gt=0)  # s
    delta_r: float = Field(ge=0, lt=1)
    delta_d: float = Field(ge=0, lt=1)
    mean_gain: Dict[int, float]  # station id -> expected amplitude gain
    mean_noise: float = Field(gt=0)  # W/Hz

    @model_validator(mode="after")
    def _positive_gains(self) -> "User":
        for station_id, gain in self.mean_gain.items():
            if not gain > 0:
                raise ValueError(f"user {self.id}: gain to station {station_id} must be positive")
        return self


class FeatureVector(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    x: float
    d_th: float
    r_th: float
    delta_d: float
    delta_r: float
    snr: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, row: Sequence[float]) -> "FeatureVector":
        return cls(**{name: float(v) for name, v in zip(FEATURE_NAMES, row)})


class Scenario(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    mbs: StationParams
    sbss: Tuple[StationParams, ...] = ()
    users: Tuple[User, ...] = ()
    delay: DelayParams = DelayParams()
    seed: int = Field(default=0, ge=0, lt=1 << 64)

    @model_validator(mode="after")
    def _check_world(self) -> "Scenario":
        if self.mbs.kind is not StationKind.MBS:
            raise ValueError("mbs entry must have kind MBS")
        if any(s.kind is not StationKind.SBS for s in self.sbss):
            raise ValueError("exactly one station may have kind MBS")
        station_ids = [self.mbs.id] + [s.id for s in self.sbss]
        if len(set(station_ids)) != len(station_ids):
            raise ValueError("station ids must be unique")
        user_ids = [u.id for u in self.users]
        if len(set(user_ids)) != len(user_ids):
            raise ValueError("user ids must be unique")
        known = set(station_ids)
        for user in self.users:
            if distance(user.position, self.mbs.position) > self.mbs.coverage_radius * (1 + 1e-12):
                raise ValueError(f"user {user.id} lies outside the MBS coverage disk")
            if self.mbs.id not in user.mean_gain:
                raise ValueError(f"user {user.id} has no gain towards the MBS")
            unknown = set(user.mean_gain) - known
            if unknown:
                raise ValueError(f"user {user.id} references unknown stations {sorted(unknown)}")
        return self

    @property
    def stations(self) -> List[StationParams]:
        return [self.mbs, *self.sbss]

    def station(self, station_id: int) -> StationParams:
        for s in self.stations:
            if s.id == station_id:
                return s
        raise KeyError(station_id)

    def user(self, user_id: int) -> User:
        for u in self.users:
            if u.id == user_id:
                return u
        raise KeyError(user_id)

    def to_json(self) -> str:
        return self.model_dump_json(indent=1)

    @classmethod
    def from_json(cls, text: Union[str, bytes]) -> "Scenario":
        return cls.model_validate_json(text)


def distance(a: Position, b: Position) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def covering_sbss(scenario: Scenario, user: User) -> List[StationParams]:
    return [s for s in scenario.sbss if distance(user.position, s.position) <= s.coverage_radius]


def channel_gain(dist: ArrayLike, model: ChannelModel) -> ArrayLike:
    """Amplitude gain sqrt(G0 * (max(d, d_ref) / d_ref)^-alpha)"""
    d = np.maximum(np.asarray(dist, dtype=float), model.d_ref)
    gain = np.sqrt(model.g0 * np.power(d / model.d_ref, -model.alpha))
    return float(gain) if gain.ndim == 0 else gain


def expected_rate(p: ArrayLike, w: ArrayLike, h_bar: ArrayLike, n0_bar: ArrayLike) -> ArrayLike:
    """Shannon rate w * log2(1 + p h^2 / n0) in bit/s"""
    snr = np.asarray(p, dtype=float) * np.square(h_bar) / n0_bar
    rate = np.asarray(w, dtype=float) * np.log1p(snr) / math.log(2)
    return float(rate) if np.ndim(rate) == 0 else rate


def delay_of(user: User, served_by_mbs: bool, delay: DelayParams) -> float:
    # offloading adds a three-way exchange over the MBS <-> SBS link
    if served_by_mbs:
        return delay.d_c
    return delay.d_c + 3 * delay.rtt


def delay_feasible(user: User, served_by_mbs: bool, delay: DelayParams) -> bool:
    # a delay equal to the threshold counts as a violation
    return delay_of(user, served_by_mbs, delay) < user.d_th


def delay_blocked(scenario: Scenario) -> List[int]:
    """Users whose threshold is missed even on the MBS; offloading only adds delay"""
    return sorted(u.id for u in scenario.users if not delay_feasible(u, True, scenario.delay))


def features_of(user: User, scenario: Scenario, reference_power: Optional[float] = None) -> FeatureVector:
    if reference_power is None:
        reference_power = scenario.mbs.p_max
    h = user.mean_gain[scenario.mbs.id]
    return FeatureVector(
        x=distance(user.position, scenario.mbs.position),
        d_th=user.d_th,
        r_th=user.r_th,
        delta_d=user.delta_d,
        delta_r=user.delta_r,
        snr=reference_power * h * h / user.mean_noise,
    )


def features_matrix(
    users: Sequence[User], scenario: Scenario, reference_power: Optional[float] = None
) -> np.ndarray:
    rows = [features_of(u, scenario, reference_power).as_array() for u in users]
    if not rows:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.vstack(rows)


def _station(station_id: int, kind: StationKind, position: Position, radius: float, cfg: StationConfig) -> StationParams:
    return StationParams(
        id=station_id,
        kind=kind,
        position=position,
        coverage_radius=radius,
        **cfg.model_dump(),
    )


def sbs_centres(config: ScenarioConfig) -> List[Position]:
    if config.sbs_positions is not None:
        return [(float(x), float(y)) for x, y in config.sbs_positions]
    ring = config.sbs_ring_fraction * config.mbs_radius
    return [
        (ring * math.cos(2 * math.pi * k / config.n_sbs), ring * math.sin(2 * math.pi * k / config.n_sbs))
        for k in range(config.n_sbs)
    ]


def _drop_in_disk(rng: np.random.Generator, centre: Position, radius: float, bound: float) -> Position:
    """Uniform point in a disk, redrawn until it also lies in the MBS disk"""
    for _ in range(MAX_DROP_ATTEMPTS):
        r = radius * math.sqrt(rng.random())
        theta = 2 * math.pi * rng.random()
        x, y = centre[0] + r * math.cos(theta), centre[1] + r * math.sin(theta)
        if math.hypot(x, y) <= bound:
            return (x, y)
    raise ConfigError(
        f"disk of radius {radius} at {centre} barely overlaps the MBS disk; "
        f"no point found in {MAX_DROP_ATTEMPTS} draws"
    )


def user_stream(seed: int, user_id: int) -> np.random.Generator:
    """Independent generator for one user, so the first n users do not depend on N"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(user_id,)))


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """
    Build a random scenario as a pure function of (config, seed).

    Users are dropped uniformly in the MBS disk, except a hotspot_fraction
    of them which land uniformly inside a random SBS disk. Constraints are
    drawn uniformly from the configured ranges. Every user draws from its
    own stream, so the scenario with n users is a prefix of the one with
    n + m users under the same seed.
    """
    if config.n_users < 1:
        raise ConfigError("scenario needs at least one user")
    if config.sbs_radius > config.mbs_radius:
        raise ConfigError(
            f"SBS coverage radius {config.sbs_radius} exceeds MBS radius {config.mbs_radius}"
        )
    if not 0 <= seed < 1 << 64:
        raise ConfigError(f"seed {seed} is not a 64-bit unsigned integer")

    origin = (0.0, 0.0)
    mbs = _station(MBS_ID, StationKind.MBS, origin, config.mbs_radius, config.mbs.model_copy(update={"reward_markup": 0.0}))
    sbss = [
        _station(k + 1, StationKind.SBS, centre, config.sbs_radius, config.sbs)
        for k, centre in enumerate(sbs_centres(config))
    ]

    users = []
    for i in range(config.n_users):
        rng = user_stream(seed, i)
        if sbss and rng.random() < config.hotspot_fraction:
            host = sbss[int(rng.integers(len(sbss)))]
            pos = _drop_in_disk(rng, host.position, config.sbs_radius, config.mbs_radius)
        else:
            pos = _drop_in_disk(rng, origin, config.mbs_radius, config.mbs_radius)
        r_th, d_th, delta_r, delta_d = (
            rng.uniform(*bounds)
            for bounds in (config.r_th_range, config.d_th_range, config.delta_r_range, config.delta_d_range)
        )
        gains = {MBS_ID: channel_gain(distance(pos, origin), config.channel)}
        for s in sbss:
            d = distance(pos, s.position)
            if d <= s.coverage_radius:
                gains[s.id] = channel_gain(d, config.channel)
        users.append(
            User(
                id=i,
                position=pos,
                r_th=float(r_th),
                d_th=float(d_th),
                delta_r=float(delta_r),
                delta_d=float(delta_d),
                mean_gain=gains,
                mean_noise=config.noise_psd,
            )
        )

    scenario = Scenario(mbs=mbs, sbss=tuple(sbss), users=tuple(users), delay=config.delay, seed=seed)
    logger.debug("[SCENARIO] %d users, %d SBSs, seed %d", len(users), len(sbss), seed)
    return scenario
