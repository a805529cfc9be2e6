import numpy as np
import pytest

from nmqubit.operators import DensityMatrix, HilbertLayout


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


def rand_matrix(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def rand_hermitian(rng, d):
    m = rand_matrix(rng, d)
    return m + m.conj().T


def rand_density(rng, dims):
    layout = HilbertLayout(tuple(dims))
    d = layout.total
    m = rand_matrix(rng, d)
    m = m @ m.conj().T
    m /= np.trace(m)
    return DensityMatrix(layout, m)
