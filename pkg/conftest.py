"""
Wspólna konfiguracja pytest: znacznik slow i opcja --runslow.
"""

import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Uruchom także długie testy treningu")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: długi test treningu (uruchamiany z --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="wymaga --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
