import numpy as np
import pytest

from equivoq import DistortionSpec, Pmf, SecrecyConfig


def binary_config(p=0.5, D=0.0, R=1.0, R0=0.0):
    return SecrecyConfig(Pmf([1 - p, p]), DistortionSpec.hamming(2, D), R, R0)


@pytest.fixture
def uniform_binary():
    return Pmf.uniform(2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
