import pytest
from hypothesis import HealthCheck, settings

from redlab.core import NetworkConfig, RedParams

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def net():
    """One sender, 10 ms propagation delay, 1.5 Mb/s link, 1000-byte packets."""
    return NetworkConfig()


@pytest.fixture
def red():
    return RedParams()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
