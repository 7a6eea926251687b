import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def grid_z():
    def make(n, side=4.0):
        c = (np.arange(n) + 0.5) * (side / n) - side / 2
        X, Y = np.meshgrid(c, c)
        return X + 1j * Y

    return make
