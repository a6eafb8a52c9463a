import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qsslab.model import InitialConditions, RateConstants

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# parameter sets used throughout the figures
FIG4 = (RateConstants(k1=2.0, km1=500.0, k2=500.0), InitialConditions(z0=1.0, e0=9.0))
FIG5_TOP = (RateConstants(k1=1.0, km1=5.0, k2=0.01), InitialConditions(z0=9.0, e0=1.0))
FIG5_BOTTOM = (RateConstants(k1=1.0, km1=5.0, k2=0.01), InitialConditions(z0=3.0, e0=7.0))
RQSSA_PANELS = (RateConstants(k1=10.0, km1=0.1, k2=0.1), InitialConditions(z0=10.0, e0=5.0))


@pytest.fixture
def fig4():
    return FIG4


@pytest.fixture
def fig5():
    return FIG5_TOP


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
