import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from laxhj.domain import make_grid
from laxhj.model import build_model
from laxhj.semigroup import make_params

settings.register_profile(
    "repro",
    max_examples=100,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def small_e3():
    grid = make_grid(64)
    model = build_model("e3", grid)
    return model, make_params(model, grid)


@pytest.fixture(scope="session")
def small_e1():
    grid = make_grid(64)
    model = build_model("e1", grid)
    return model, make_params(model, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _quiet_boundary_warnings():
    from laxhj.semigroup import VelocityBoundaryWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", VelocityBoundaryWarning)
        yield
