import time

import numpy as np
import pytest

from sympose.pipeline import load_object

_MODELS = {}
_TIMES = {}


def get_model(name):
    """Detected fixture, built once per session (detection dominates test time)."""
    if name not in _MODELS:
        t0 = time.perf_counter()
        _MODELS[name] = load_object(name)
        _TIMES[name] = time.perf_counter() - t0
    return _MODELS[name]


def detection_time(name):
    get_model(name)
    return _TIMES[name]


@pytest.fixture(scope="session")
def models():
    return get_model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
