import numpy as np
import pytest

from sgnlab.network import TANH, NetworkConfig, gaussian_init, make_geometry, sample_in_ball


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def unit_ball_inputs(rng, n, d):
    X = rng.standard_normal((n, d))
    X *= (rng.uniform(size=n) / np.linalg.norm(X, axis=1))[:, None]
    return X


@pytest.fixture
def small_net():
    cfg = NetworkConfig(2, 8, 3)
    params = gaussian_init(cfg, 0)
    return cfg, params, TANH
