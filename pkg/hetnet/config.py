"""
Configuration models

Every option of the toolkit lives here as a pydantic model so one JSON
document (RunConfig) can drive a whole run.
"""
import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from hetnet.errors import ConfigError

Range = Tuple[float, float]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelModel(_Model):
    """Log-distance path loss"""

    g0: float = Field(default=1.0, gt=0)
    d_ref: float = Field(default=10.0, gt=0)  # ft
    alpha: float = Field(default=3.5, ge=0)


class DelayParams(_Model):
    d_c: float = Field(default=1e-3, ge=0)  # MBS computation delay (s)
    rtt: float = Field(default=0.5e-3, ge=0)  # one MBS <-> SBS round trip (s)


class StationConfig(_Model):
    """Cost and capacity parameters shared by stations of one kind"""

    p_max: float = Field(default=5.0, gt=0)  # W
    w_max: float = Field(default=1e9, ge=0)  # Hz
    c_p: float = Field(default=30.0, ge=0)  # cost / W
    c_w: float = Field(default=2e-5, ge=0)  # cost / Hz
    gamma: float = Field(default=1.0, gt=0)
    reward_markup: float = Field(default=0.0, ge=0)


def _default_sbs() -> StationConfig:
    return StationConfig(w_max=2e8, reward_markup=0.1)


class ScenarioConfig(_Model):
    n_users: int = Field(default=300, ge=0)
    n_sbs: int = Field(default=8, ge=0)
    mbs_radius: float = Field(default=2000.0, gt=0)  # ft
    sbs_radius: float = Field(default=600.0, gt=0)  # ft
    sbs_ring_fraction: float = Field(default=0.5, ge=0, le=1)
    sbs_positions: Optional[List[Tuple[float, float]]] = None
    hotspot_fraction: float = Field(default=0.5, ge=0, le=1)

    mbs: StationConfig = StationConfig()
    sbs: StationConfig = Field(default_factory=_default_sbs)
    channel: ChannelModel = ChannelModel()
    delay: DelayParams = DelayParams()
    noise_psd: float = Field(default=3e-8, gt=0)  # W/Hz

    r_th_range: Range = (1e6, 1e7)  # bit/s
    d_th_range: Range = (2e-3, 20e-3)  # s
    delta_r_range: Range = (0.01, 0.1)
    delta_d_range: Range = (0.01, 0.1)

    # SNR feature power; None means the MBS p_max
    reference_power: Optional[float] = Field(default=None, gt=0)

    @field_validator("r_th_range", "d_th_range", "delta_r_range", "delta_d_range")
    @classmethod
    def _ordered(cls, value: Range) -> Range:
        lo, hi = value
        if lo > hi:
            raise ValueError(f"range lower bound {lo} exceeds upper bound {hi}")
        if lo < 0:
            raise ValueError("ranges must be non-negative")
        return value

    @field_validator("delta_r_range", "delta_d_range")
    @classmethod
    def _below_one(cls, value: Range) -> Range:
        if value[1] >= 1:
            raise ValueError("violation bounds must stay below 1")
        return value

    @field_validator("r_th_range", "d_th_range")
    @classmethod
    def _positive(cls, value: Range) -> Range:
        if value[0] <= 0:
            raise ValueError("thresholds must be positive")
        return value

    @model_validator(mode="after")
    def _positions_match_count(self) -> "ScenarioConfig":
        if self.sbs_positions is not None and len(self.sbs_positions) != self.n_sbs:
            raise ValueError(
                f"sbs_positions lists {len(self.sbs_positions)} centres for n_sbs={self.n_sbs}"
            )
        for x, y in self.sbs_positions or ():
            # users are only dropped where the SBS disk overlaps the MBS disk
            if math.hypot(x, y) >= self.mbs_radius + self.sbs_radius:
                raise ValueError(f"SBS disk at ({x}, {y}) does not overlap the MBS coverage disk")
        return self


class CroOptions(_Model):
    bandwidth_tol: float = Field(default=1e-10, gt=0)  # fraction of W_max
    search_tol: float = Field(default=1e-10, gt=0)  # golden-section tolerance on s


class BarrierOpts(_Model):
    tol: float = Field(default=1e-8, gt=0)
    max_iters: int = Field(default=500, ge=1)
    match_tol: float = Field(default=1e-4, gt=0)
    kappa: float = Field(default=0.5, gt=0, lt=1)
    inflation: float = Field(default=1.05, gt=1)
    verify_against_reference: bool = False


class JurOptions(_Model):
    node_budget: int = Field(default=1_000_000, ge=1)
    exact_limit: int = Field(default=20, ge=1)
    drop_policy: Literal["largest-demand"] = "largest-demand"


class SolverOptions(_Model):
    jur: JurOptions = JurOptions()
    cro: CroOptions = CroOptions()


class SvmParams(_Model):
    c: float = Field(default=10.0, gt=0)
    kernel_gamma: float = Field(default=0.1, gt=0)
    tol: float = Field(default=1e-3, gt=0)
    max_passes: int = Field(default=50, ge=1)
    cv_folds: int = Field(default=5, ge=2)
    c_grid: List[float] = [0.1, 1.0, 10.0, 100.0]
    gamma_grid: List[float] = [0.01, 0.1, 1.0]


class TrainingCorpus(_Model):
    """Inline training data: JUR-labelled scenarios generated on the fly"""

    n_scenarios: int = Field(default=10, ge=1)
    n_users: int = Field(default=30, ge=1)


class LhmConfig(_Model):
    training_data: Optional[Path] = None
    training_scenarios: Optional[TrainingCorpus] = TrainingCorpus()
    svm: SvmParams = SvmParams()
    barrier: BarrierOpts = BarrierOpts()
    fallback: Literal["repair", "strict"] = "repair"

    @model_validator(mode="after")
    def _one_source(self) -> "LhmConfig":
        if (self.training_data is None) == (self.training_scenarios is None):
            raise ValueError("set exactly one of training_data / training_scenarios")
        return self


class ExperimentOptions(_Model):
    sweep_grid: List[int] = list(range(300, 501, 20))
    include_timings: bool = True

    @field_validator("sweep_grid")
    @classmethod
    def _ascending(cls, grid: List[int]) -> List[int]:
        if not grid:
            raise ValueError("sweep grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("sweep grid must be strictly ascending")
        if grid[0] < 1:
            raise ValueError("sweep grid needs at least one user per point")
        return grid


class RunConfig(_Model):
    scenario: ScenarioConfig = ScenarioConfig()
    solver: SolverOptions = SolverOptions()
    lhm: LhmConfig = LhmConfig()
    experiments: ExperimentOptions = ExperimentOptions()
    seed: int = Field(default=1, ge=0, lt=1 << 64)
    output_dir: Path = Path("results")


def default_run_config() -> RunConfig:
    return RunConfig()


def load_run_config(path: Path) -> RunConfig:
    """
    Read a RunConfig JSON file.

    Raises ConfigError when the file is missing or not JSON, and pydantic's
    ValidationError (with field locations) for bad values.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return RunConfig.model_validate(raw)
