import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request, capsys):
    """Record a ``PASS``/``FAIL`` line for one acceptance criterion."""
    lines = request.config.stash[ACCEPTANCE]

    def report(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail}"
        lines.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
