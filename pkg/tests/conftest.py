import numpy as np
import pytest

from irsbf.model import ChannelSet, SystemConfig


def complex_gaussian(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_channels(rng, n_i, n_s, scale=1.0):
    return ChannelSet(
        h_si=scale * complex_gaussian(rng, n_i, n_s),
        h_id=scale * complex_gaussian(rng, n_i),
        h_sd=scale * complex_gaussian(rng, n_s),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


@pytest.fixture
def small_cfg():
    return SystemConfig(n_s=4, n_i=8, p=2.0, kappa_s=0.1, kappa_d=0.15, sigma_n2=0.05)
