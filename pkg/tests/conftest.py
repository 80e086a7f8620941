import numpy as np
import pytest

from mmbeam.channel import ChannelParams, generate_channel
from mmbeam.metrics import NoiseModel


def draw_users(seed, k_users, n_r, n_t, params=None, distance_m=30.0):
    rng = np.random.default_rng(seed)
    params = params or ChannelParams()
    return [generate_channel(params, n_r, n_t, distance_m, rng) for _ in range(k_users)]


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def noise():
    return NoiseModel()


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
