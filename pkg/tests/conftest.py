import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from slopeplan import terrain

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def flat3():
    return terrain.DemGrid(np.zeros((3, 3)), world_scale_m=1.0)


@pytest.fixture(scope="session")
def hills50():
    return terrain.generate(11, 50, 50)


@pytest.fixture(scope="session")
def hills20():
    return terrain.generate(5, 20, 20)


ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record ``(criterion, ok, detail)`` for the end-of-run acceptance summary."""
    def record(number, ok, detail=""):
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
