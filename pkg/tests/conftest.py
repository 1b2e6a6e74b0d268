import numpy as np
import pytest
from scipy.signal import lfilter


def coloured_record(rng, D=4, T=600, mix=True):
    """Mixed AR(1) channels with distinct poles; every lag carries structure."""
    poles = rng.uniform(-0.8, 0.8, size=D)
    e = rng.standard_normal((D, T + 100))
    s = np.stack([lfilter([1.0], [1.0, -a], row) for a, row in zip(poles, e)])[:, 100:]
    x = rng.standard_normal((D, D)) @ s if mix else s
    return x - x.mean(axis=1, keepdims=True)


def lagged_pair(rng, T=2000, coef=0.8, noise=1.0):
    """``y`` white, ``z(t) = coef * y(t-1) + noise * e(t)``."""
    y = rng.standard_normal(T)
    z = noise * rng.standard_normal(T)
    z[1:] += coef * y[:-1]
    return y, z


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
