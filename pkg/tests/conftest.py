import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from twomix.mixture import Gaussian1D, Mixture1D  # noqa: E402


@pytest.fixture
def f0():
    return Mixture1D(0.5, 0.5, Gaussian1D(-1.0, 1.0), Gaussian1D(1.0, 2.0))
