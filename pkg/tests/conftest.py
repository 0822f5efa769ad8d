from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import settings

from rvbqc import qcore

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def invariant_checks(request):
    """Every DensityMatrix built during a unit test is checked for hermiticity, trace and positivity."""
    on = request.node.get_closest_marker("no_invariant_checks") is None
    prev = qcore.CHECK_INVARIANTS
    qcore.set_invariant_checks(on)
    yield
    qcore.set_invariant_checks(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "no_invariant_checks: skip per-operation state validation (long runs)")
