import numpy as np
import pytest

from subdiff.numerics import make_rng


class FakeRng:
    """Stands in for a Generator where the test wants zero noise.

    gaussian_noise only ever calls standard_normal, so returning zeros turns
    every stochastic update into its deterministic drift part.
    """

    def standard_normal(self, size=None):
        return np.zeros(size if size is not None else ())


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def zero_rng():
    return FakeRng()


def random_complex(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
