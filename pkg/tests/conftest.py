import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_unit_frame(rng, shape=(64, 64)):
    """Uniform-noise pixels in [0, 1]."""
    return rng.random(shape)
