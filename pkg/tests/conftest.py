import numpy as np
import pytest

from jumpchain.discretize import ConductanceMatrix
from jumpchain.lattice import Lattice

collect_ignore = ["make_oracles.py"]


def dense_toy(M, rng, density=0.6, scale=1.0, sym=False):
    """Random nonnegative rate table on M states, optionally symmetric."""
    A = rng.uniform(0.0, scale, (M, M)) * (rng.random((M, M)) < density)
    if sym:
        A = (A + A.T) / 2
    np.fill_diagonal(A, 0.0)
    return A


def closed_toy(M_half, rng, **kw):
    """Leak-free ConductanceMatrix on the window {-M_half..M_half}/1 with dense random rates."""
    lat = Lattice(1, 1, M_half)
    A = dense_toy(len(lat), rng, **kw)
    return ConductanceMatrix.from_dense(lat, A), A


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
