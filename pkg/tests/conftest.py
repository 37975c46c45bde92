import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    return ACCEPTANCE


def random_instance(rng, n, zero_free=True):
    C = rng.uniform(0.0, 1.0, size=(n, n))
    C /= C.max()
    r = rng.dirichlet(np.ones(n))
    c = rng.dirichlet(np.ones(n))
    if zero_free:
        r = np.maximum(r, 1e-3)
        c = np.maximum(c, 1e-3)
        r /= r.sum()
        c /= c.sum()
    return C, r, c


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def fixture_2x2():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    return C, np.array([0.3, 0.7]), np.array([0.6, 0.4])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
