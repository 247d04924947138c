import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from isothermic.modelspace import ModelSpace

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(params=[-1.0, 0.0, 1.0], ids=["k=-1", "k=0", "k=1"])
def space(request):
    return ModelSpace(request.param, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance outcomes, one line per criterion, echoed in the terminal summary.
ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE[number] = (passed, detail)
        print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}")
