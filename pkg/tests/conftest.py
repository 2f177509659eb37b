import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evoctrl.checks import random_spd, random_system

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_system(rng):
    return random_system(rng, 4, 2, 2)


__all__ = ["random_spd", "random_system"]


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
