import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _quiet_solver_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="pottsfit")


def random_params(rng, d, K, density=1.0, scale=1.0):
    """Random PottsParams with roughly ``density`` of the site pairs coupled."""
    from pottsfit.model import PottsParams
    theta = rng.normal(0.0, scale, size=(d, K))
    gamma = {}
    for j in range(d):
        for r in range(j + 1, d):
            if rng.random() < density:
                gamma[(j, r)] = rng.normal(0.0, scale, size=(K, K))
    return PottsParams(theta, gamma)
