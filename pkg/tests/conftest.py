import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from advtrain.sim import get_scenario

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def nsjcr():
    return get_scenario("nsjcr")


@pytest.fixture(scope="session", params=["nsjcr", "sjrt", "sjlt"])
def any_scenario(request):
    return get_scenario(request.param)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
