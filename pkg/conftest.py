import numpy as np
import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    """Seeded generator shared by randomized tests."""
    return np.random.default_rng(12345)
