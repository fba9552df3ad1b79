import numpy as np
import pytest

from periodic_horizon import DiscountConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[(0.5, 1.0), (0.1, 2.0), (2.0, 1.5)], ids=lambda p: f"r{p[0]}-T{p[1]}")
def discount(request):
    return DiscountConfig(*request.param)
