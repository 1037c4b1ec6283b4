import numpy as np
import pytest

from builders import mbs, placed_user, sbs, world
from hetnet.config import ScenarioConfig
from hetnet.scenario import generate_scenario
from hetnet.svm import TrainingSet


@pytest.fixture
def small_config() -> ScenarioConfig:
    return ScenarioConfig(n_users=10, n_sbs=2)


@pytest.fixture
def small_scenario(small_config):
    return generate_scenario(small_config, 7)


@pytest.fixture
def two_cell_world():
    """One MBS, one SBS at (800, 0): user 0 next to the SBS, user 1 near the MBS, user 2 at the edge"""
    macro = mbs()
    small = sbs(1, (800.0, 0.0))
    stations = [macro, small]
    users = [
        placed_user(0, (850.0, 50.0), stations),
        placed_user(1, (100.0, 0.0), stations),
        placed_user(2, (-1500.0, 0.0), stations),
    ]
    return world(macro, [small], users)


@pytest.fixture
def separable_set() -> TrainingSet:
    """20 points in two clusters far apart along the first two features"""
    rng = np.random.default_rng(3)
    pos = rng.normal(loc=(3.0, 3.0), scale=0.3, size=(10, 2))
    neg = rng.normal(loc=(-3.0, -3.0), scale=0.3, size=(10, 2))
    X = np.zeros((20, 6))
    X[:10, :2] = pos
    X[10:, :2] = neg
    X[:, 2:] = rng.normal(scale=0.01, size=(20, 4))
    y = np.array([1] * 10 + [-1] * 10)
    return TrainingSet(X, y)
