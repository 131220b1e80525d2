import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sdridge.ridge import Dataset

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_instance(rng, n=30, p=10, noise=1.0):
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p) / np.sqrt(p)
    y = X @ beta + noise * rng.standard_normal(n)
    return Dataset(X, y), beta


def random_spd(rng, p, floor=0.1):
    A = rng.standard_normal((p, p))
    return A @ A.T / p + floor * np.eye(p)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def instance(rng):
    return random_instance(rng)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
