import numpy as np
import pytest

from quadmpc.dynamics import QuadParams


@pytest.fixture
def params():
    return QuadParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
