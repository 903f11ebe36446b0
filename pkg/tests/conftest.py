import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("snlab", max_examples=30, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("snlab")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(name, ok, detail, seconds)``."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def record(name, ok, detail, seconds):
        line = f"{name:<4} {'PASS' if ok else 'FAIL'}  {detail}  ({seconds:.1f} s)"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s[1:s.index(" ")])):
            terminalreporter.write_line(line)
