import numpy as np
import pytest

from lorreg.grid import ImageGrid
from lorreg.synth import smooth_random_field


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_pair_2d():
    a = smooth_random_field((24, 24), sigma=1.5, seed=7, low=0.1, high=0.9)
    b = smooth_random_field((24, 24), sigma=1.5, seed=8, low=0.1, high=0.9)
    return a, b


def make_image(values):
    return ImageGrid(np.asarray(values, dtype=np.float64))
