"""
Tests for bit accuracy, stability margin and recall accuracy
"""

import numpy as np
import pytest

from core import DualWeights, PatternSet
from kernel import gram
from metrics import (MetricsReport, bit_accuracy, degradation, evaluate, recall_accuracy,
                     stability_margin, stored_potentials)


def test_single_pattern_scores(single_pattern):
    ctx = gram(single_pattern, 0.2)
    w = DualWeights(single_pattern.data.astype(float))
    assert bit_accuracy(w, single_pattern, ctx) == 1.0
    assert stability_margin(w, single_pattern, ctx) == 1.0
    assert bit_accuracy(-w, single_pattern, ctx) == 0.0
    assert stability_margin(-w, single_pattern, ctx) == -1.0


def test_zero_weights(single_pattern):
    ctx = gram(single_pattern, 0.2)
    zero = DualWeights(np.zeros((1, single_pattern.N)))
    assert stability_margin(zero, single_pattern, ctx) == 0.0
    # every neuron goes to +1
    assert bit_accuracy(zero, single_pattern, ctx) == np.mean(single_pattern.data == 1)


def test_negated_weights_complement_accuracy(rng):
    patterns = PatternSet(2 * rng.integers(0, 2, (7, 20)) - 1)
    ctx = gram(patterns, 0.05)
    for _ in range(10):
        w = DualWeights(rng.normal(size=(7, 20)))
        assert bit_accuracy(w, patterns, ctx) + bit_accuracy(-w, patterns, ctx) == pytest.approx(1.0)


def test_metrics_ignore_pattern_order(rng):
    data = 2 * rng.integers(0, 2, (6, 15)) - 1
    alpha = rng.normal(size=(6, 15))
    perm = rng.permutation(6)
    a = PatternSet(data)
    b = PatternSet(data[perm])
    wa = DualWeights(alpha)
    wb = DualWeights(alpha[perm])
    assert bit_accuracy(wa, a, gram(a, 0.1)) == bit_accuracy(wb, b, gram(b, 0.1))
    assert stability_margin(wa, a, gram(a, 0.1)) == pytest.approx(
        stability_margin(wb, b, gram(b, 0.1)), abs=1e-12)


def test_margin_matches_naive(rng):
    patterns = PatternSet(2 * rng.integers(0, 2, (4, 9)) - 1)
    ctx = gram(patterns, 0.1)
    w = DualWeights(rng.normal(size=(4, 9)))
    total = 0.0
    for mu in range(4):
        for i in range(9):
            h = sum(w.alpha[nu, i] * ctx.gram[mu, nu] for nu in range(4))
            total += h * patterns.data[mu, i]
    assert stability_margin(w, patterns, ctx) == pytest.approx(total / 36, abs=1e-12)


def test_mismatched_shapes_raise(small_model):
    patterns, ctx, _ = small_model
    with pytest.raises(ValueError):
        stored_potentials(DualWeights(np.ones((2, 2))), patterns, ctx)
    other = gram(PatternSet(patterns.data[:3]), ctx.gamma)
    with pytest.raises(ValueError):
        bit_accuracy(DualWeights(np.ones((patterns.P, patterns.N))), patterns, other)


def test_clean_recall_is_perfect(small_model):
    patterns, ctx, weights = small_model
    mean, std = recall_accuracy(weights, patterns, ctx, 0.0, 12, np.random.default_rng(0))
    assert (mean, std) == (1.0, 0.0)


def test_recall_is_reproducible(small_model):
    patterns, ctx, weights = small_model
    a = recall_accuracy(weights, patterns, ctx, 0.2, 10, np.random.default_rng(5))
    b = recall_accuracy(weights, patterns, ctx, 0.2, 10, np.random.default_rng(5))
    assert a == b
    assert 0.0 <= a[0] <= 1.0 and a[1] >= 0.0


@pytest.mark.parametrize('rho,trials', [(-0.01, 5), (1.01, 5), (0.1, 0)])
def test_recall_rejects_arguments(small_model, rho, trials):
    patterns, ctx, weights = small_model
    with pytest.raises(ValueError):
        recall_accuracy(weights, patterns, ctx, rho, trials, np.random.default_rng(0))


def test_degradation_sign():
    assert degradation(0.9, 0.75) == pytest.approx(0.15)
    assert degradation(0.5, 0.6) == pytest.approx(-0.1)


def test_evaluate_report(small_model):
    patterns, ctx, weights = small_model
    report = evaluate(weights, patterns, ctx)
    assert report.bit_accuracy == 1.0
    assert report.stability_margin > 0
    assert report.recall_accuracy is None
    with pytest.raises(ValueError):
        MetricsReport(bit_accuracy=1.5, stability_margin=0.0)
    with pytest.raises(ValueError):
        MetricsReport(bit_accuracy=1.0, stability_margin=float('inf'))
