import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oco_s2.comparator import ComparatorProblem, default_budget, solve_comparator  # noqa: E402
from oco_s2.costs import CostConfig  # noqa: E402
from oco_s2.lti import default_model, generate_disturbances  # noqa: E402


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def cost():
    return CostConfig()


@pytest.fixture(scope="session")
def dist0():
    return generate_disturbances(200, 10, 0)


@pytest.fixture(scope="session")
def comparator0(model, cost, dist0):
    return solve_comparator(ComparatorProblem(model, dist0, cost, default_budget(dist0)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
