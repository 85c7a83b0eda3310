import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from envs import gridworld_1d  # noqa: E402
from exact_solver import solve_optimal  # noqa: E402
from harness import ExperimentConfig  # noqa: E402

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GRIDWORLD_CONFIG = os.path.join(REPO_ROOT, 'configs', 'paper_gridworld.json')


@pytest.fixture
def gridworld():
    return gridworld_1d()


@pytest.fixture
def gridworld_q_star(gridworld):
    return solve_optimal(gridworld)


@pytest.fixture
def gridworld_config():
    return ExperimentConfig.from_json(GRIDWORLD_CONFIG)
