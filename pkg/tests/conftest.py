import pytest
from hypothesis import settings

from subopt_lfd.envs import GridNav, PointReach

from helpers import random_dataset

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def grid():
    return GridNav()


@pytest.fixture
def small_grid():
    return GridNav(size=4, horizon=16)


@pytest.fixture
def point():
    return PointReach()


@pytest.fixture
def grid_dataset(small_grid):
    return random_dataset(small_grid)


@pytest.fixture
def point_dataset():
    return random_dataset(PointReach(horizon=12), levels=(0.0, 0.25, 0.5, 1.0))
