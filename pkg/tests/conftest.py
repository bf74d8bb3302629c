import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from latentvar.model import SensorMapA, SensorMapB

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_map_a(rng, m=4, z_lo=-1.0, z_hi=1.0):
    alpha = rng.uniform(0.1, 1.0, m)
    alpha *= (z_hi - z_lo) / alpha.sum()
    return SensorMapA(alpha, rng.uniform(0.5, 3.0, m), rng.uniform(-2.0, 2.0, m), z_lo, z_lo, z_hi)


def random_map_b(rng, m=4, gamma=None):
    g = rng.uniform(0.2, 1.5) if gamma is None else gamma
    return SensorMapB(rng.uniform(0.0, 1.0, m), rng.uniform(0.5, 3.0, m),
                      rng.uniform(-2.0, 2.0, m), rng.normal(), g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------------------ acceptance report

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """record(criterion, ok, detail): one PASS/FAIL line per acceptance criterion."""
    def record(criterion, ok, detail):
        ACCEPTANCE[criterion] = (bool(ok), detail)
        print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
