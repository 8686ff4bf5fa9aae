import numpy as np
import pytest

from annihilate.kernels import KernelPair, KernelSpec


@pytest.fixture(scope="session")
def log_pair():
    return KernelPair.build(KernelSpec("log", "V"), KernelSpec("zero", "W"))


@pytest.fixture(scope="session")
def attract_pair():
    return KernelPair.build(KernelSpec("log", "V"), KernelSpec("reglog", "W", delta=0.1))


@pytest.fixture(scope="session")
def wall_pair():
    return KernelPair.build(KernelSpec("wall", "V"), KernelSpec("reglog", "W", delta=0.3))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
