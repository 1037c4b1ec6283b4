import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from hetnet.config import ExperimentOptions, LhmConfig, RunConfig, load_run_config
from hetnet.errors import ConfigError
from hetnet.numerics import bisect_decreasing, golden_section, safeguarded_newton
from hetnet.seeding import derive_seed, rng_for
from hetnet.settings import get_settings, parallel_map


def square(x):
    return x * x


class TestRunConfig:
    def test_load(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 9, "scenario": {"n_users": 12}}))
        config = load_run_config(path)
        assert config.seed == 9 and config.scenario.n_users == 12
        assert config.scenario.n_sbs == 8

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "none.json")

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"sead": 1}))
        with pytest.raises(ValidationError):
            load_run_config(path)

    def test_defaults_round_trip(self):
        config = RunConfig()
        assert RunConfig.model_validate_json(config.model_dump_json()) == config

    def test_one_training_source(self, tmp_path):
        with pytest.raises(ValidationError):
            LhmConfig(training_data=tmp_path / "x.csv")
        with pytest.raises(ValidationError):
            LhmConfig(training_scenarios=None)

    def test_sweep_grid_ascending(self):
        with pytest.raises(ValidationError):
            ExperimentOptions(sweep_grid=[5, 5])


class TestSeeding:
    def test_streams_are_stable_and_distinct(self):
        assert derive_seed(1, "scenario") == derive_seed(1, "scenario")
        assert derive_seed(1, "scenario") != derive_seed(2, "scenario")
        assert derive_seed(1, "sweep", 3) != derive_seed(1, "sweep", 4)
        assert 0 <= derive_seed(1, "x") < 1 << 64

    def test_rng(self):
        assert rng_for(4, "a").random() == rng_for(4, "a").random()


class TestSettings:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("HETNET_THREADS", "3")
        assert get_settings().threads == 3

    def test_parallel_map_keeps_order(self):
        assert parallel_map(square, [3, 1, 2], workers=1) == [9, 1, 4]
        assert parallel_map(square, [], workers=4) == []


class TestNumerics:
    def test_golden_section(self):
        centres = np.array([0.3, 2.0, -1.0])
        x = golden_section(lambda t: (t - centres) ** 2, np.full(3, -5.0), np.full(3, 5.0), tol=1e-10)
        assert x == pytest.approx(centres, abs=1e-8)

    def test_newton_bracketed(self):
        targets = np.array([2.0, 10.0])
        x = safeguarded_newton(lambda t: t ** 3 - targets, lambda t: 3 * t ** 2, np.zeros(2), np.full(2, 5.0))
        assert x == pytest.approx(np.cbrt(targets), rel=1e-12)

    def test_bisect_decreasing(self):
        x, gx = bisect_decreasing(lambda t: math.exp(-t), 0.5, 0.0, 10.0, 1e-10)
        assert gx <= 0.5
        assert x == pytest.approx(math.log(2), rel=1e-9)
