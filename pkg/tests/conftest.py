import pytest
import torch

from kernel import get_kernel, min_kernel_eigensystem, power_law_eigensystem
from risk import simpson_rule
from target import get_target, synthesize_target

NAMED = ("cos2pi", "sin2pi", "sin3pi2")


@pytest.fixture(scope="session", autouse=True)
def single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def min_kernel():
    return get_kernel("min")


@pytest.fixture(scope="session")
def min_eigensystem(min_kernel):
    return min_kernel.eigensystem


@pytest.fixture(scope="session")
def named_targets(min_eigensystem):
    return {name: get_target(name, min_eigensystem) for name in NAMED}


@pytest.fixture(scope="session")
def power_law():
    return power_law_eigensystem(2.0, 5000)


@pytest.fixture(scope="session")
def source_target(power_law):
    return synthesize_target(power_law, 1.5)


@pytest.fixture(scope="session")
def quadrature():
    return simpson_rule(8193)
