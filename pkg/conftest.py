"""
Shared Test Fixtures
====================
Tape isolation, tiny model configs and the slow-test switch.
"""

import numpy as np
import pytest

from config import settings
from models import XiNetConfig
from xinet import autodiff as ad


@pytest.fixture(autouse=True)
def fresh_tape():
    """Every test starts and ends with an empty tape."""
    ad.get_tape().reset()
    yield
    ad.get_tape().reset()


def tiny_config(**overrides):
    """L=64, P=4, two stages of 2 blocks, window 4, 64-bit."""
    values = dict(input_length=64, patch=4, embed_dim=8, stage_depths=[2, 2], bottleneck_depth=2,
                  window=4, variant='full', seed=0, dtype='float64')
    values.update(overrides)
    return XiNetConfig(**values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


slow = pytest.mark.skipif(not settings.RUN_SLOW_TESTS, reason="set XINET_RUN_SLOW_TESTS=1 to run")
