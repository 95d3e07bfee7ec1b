"""Shared pytest configuration.

Full-scale statistical checks are marked ``slow`` and only run when the
marker is selected explicitly (``pytest -m slow``) or VIS_SLOW_TESTS=1.
"""

import os

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale statistical acceptance runs (minutes)")


def pytest_collection_modifyitems(config, items):
    if "slow" in (config.getoption("-m") or "") or os.getenv("VIS_SLOW_TESTS") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; use -m slow or VIS_SLOW_TESTS=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
