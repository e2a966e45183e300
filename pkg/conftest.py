"""
Shared fixtures: tiny trained models that train in well under a second
"""

import numpy as np
import pytest

from core import PatternSet, RngSeed, generate_patterns
from kernel import gram
from train_model import TrainConfig, klr_train


@pytest.fixture(autouse=True)
def quiet(monkeypatch):
    monkeypatch.setenv('KHM_QUIET', 'true')


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_patterns():
    return generate_patterns(16, 6, RngSeed(3).stream(0, 'patterns'))


@pytest.fixture
def small_model(small_patterns):
    """(patterns, ctx, weights) for N=16, P=6, gamma=0.1"""
    ctx = gram(small_patterns, 0.1)
    weights = klr_train(small_patterns, ctx, TrainConfig())
    return small_patterns, ctx, weights


@pytest.fixture
def single_pattern():
    """P=1 pattern with alpha = xi, so h(xi) = xi exactly"""
    xi = np.array([1, -1, 1, 1, -1, -1, 1, -1], dtype=np.int8)
    return PatternSet(xi[None, :])
