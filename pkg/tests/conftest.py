"""Shared fixtures and hypothesis profiles."""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest
from hypothesis import HealthCheck, settings

from config import reset_config

settings.register_profile("default", max_examples=100, deadline=None)
settings.register_profile("ci", max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale simulation sweeps (run with -m slow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("-m"):
        return
    skip = pytest.mark.skip(reason="slow; run with -m slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch):
    """Keep DSTORE_* variables from the developer's shell out of the tests."""
    for name in list(os.environ):
        if name.startswith("DSTORE_"):
            monkeypatch.delenv(name, raising=False)
    reset_config()
    yield
    reset_config()
