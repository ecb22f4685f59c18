import numpy as np
import pytest

import rsmimo as rs


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return rs.SystemConfig(M=4, Q=2, K=2, Qc=2, Qk=(2, 2), Pt=100.0,
                           alpha=0.6, sigma_k2=(1.0, 1.0), N=16, seed=3)


@pytest.fixture
def small_scene(small_config):
    return rs.draw_scene(small_config, rs.make_rng(7))


def random_precoders(rng, M, Qc, Qk, Pt=None):
    P = rs.PrecoderSet(Pc=crandn(rng, M, Qc),
                       Pk=tuple(crandn(rng, M, q) for q in Qk))
    if Pt is not None:
        P = P.scaled(np.sqrt(0.9 * Pt / P.total_power()))
    return P
