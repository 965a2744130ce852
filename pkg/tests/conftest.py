import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _quiet_off_period_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="t_off below")
        yield


_REPORT = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request, capsys):
    """Record one pass/fail line for an acceptance criterion and echo it."""
    lines = request.config.stash.setdefault(_REPORT, [])

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        with capsys.disabled():
            print(f"\n  {line}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
