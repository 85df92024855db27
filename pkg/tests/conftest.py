import os

import pytest
from hypothesis import HealthCheck, settings

from trace_sobolev_lab.curve import fundamental_constants
from trace_sobolev_lab.kernel import Params

# keep the optional POT backends quiet before anything imports ot
for _name in ("PYTORCH", "TENSORFLOW", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_name}", "1")

settings.register_profile(
    "lab", deadline=None, max_examples=25, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("lab")

PARAM_SETS = [(3, 2.0), (2, 1.5), (4, 2.5), (5, 3.0)]


@pytest.fixture(scope="session")
def P32():
    return Params(3, 2.0)


@pytest.fixture(scope="session")
def P215():
    return Params(2, 1.5)


@pytest.fixture(scope="session")
def consts32(P32):
    return fundamental_constants(P32, estimate_t_star=False)


@pytest.fixture(scope="session")
def consts215(P215):
    return fundamental_constants(P215, estimate_t_star=False)
