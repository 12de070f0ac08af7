from __future__ import annotations

import time

import numpy as np
import pytest

from synthalloc.ctgan import CtganConfig
from synthalloc.fixture import two_regime_table
from synthalloc.sdg import train_sdg_pipeline


@pytest.fixture(scope="session")
def two_regime():
    """1000-row table drawn from two well-separated Gaussian regimes, with true labels."""
    return two_regime_table()


@pytest.fixture(scope="session")
def two_regime_timed(two_regime):
    """Full pipeline at default settings (1500 epochs) and its fit time in seconds."""
    table, _ = two_regime
    t0 = time.perf_counter()
    model = train_sdg_pipeline(table, CtganConfig(seed=0))
    return model, time.perf_counter() - t0


@pytest.fixture(scope="session")
def two_regime_model(two_regime_timed):
    """Shared because it takes about a minute."""
    return two_regime_timed[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
