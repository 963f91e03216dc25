import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def unit_columns(rng, n, m):
    A = rng.standard_normal((n, m))
    return A / np.linalg.norm(A, axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
