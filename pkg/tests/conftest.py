import numpy as np
import pytest

from bubbledyn import ModelParams


@pytest.fixture
def ref():
    """The reference parameters (a, b, c) = (1, 5, 1)."""
    return ModelParams(1.0, 5.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
