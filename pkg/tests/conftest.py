import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from otkit import _threads
from otkit.measures import DiscreteMeasure

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_threads.set(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def random_measure(rng, n, d, mass=None, lo=0.0, hi=1.0):
    w = rng.uniform(0.1, 1.0, n)
    if mass is not None:
        w *= mass / w.sum()
    return DiscreteMeasure(rng.uniform(lo, hi, (n, d)), w)
