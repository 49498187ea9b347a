import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dnlap.exponents import ModelParams, transition_exponent

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

P_ONE_1D = transition_exponent(1, 0.5, 1.0)

CONFIG_A = ModelParams(1, 0.5, 3.0, 1.0)
CONFIG_B = ModelParams(1, 0.5, 1.45, 1.0)
CONFIG_C = ModelParams(1, 0.5, P_ONE_1D, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance lines, filled by test_acceptance and printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
