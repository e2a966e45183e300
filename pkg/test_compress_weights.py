"""
Tests for quantization, binarization and magnitude pruning of dual weights
"""

import numpy as np
import pytest

from compress_weights import (CompressionSpec, apply_compression, binarize, prune_magnitude,
                              prune_threshold, quantization_error_stats, quantize_array,
                              quantize_uniform)
from core import DualWeights, TrainingReport


def test_two_bit_levels_by_hand():
    x = np.array([-1.0, 0.4, 1.0, -0.2, 0.0])
    q, delta = quantize_array(x, 2)
    assert delta == pytest.approx(2 / 3)
    assert q[1] == pytest.approx(1 / 3)
    levels = np.array([-1.0, -1 / 3, 1 / 3, 1.0])
    assert all(np.min(np.abs(levels - v)) < 1e-15 for v in q)


def test_quantizer_bound_idempotence_and_levels(rng):
    for k in range(2, 17):
        x = rng.normal(scale=rng.uniform(0.1, 10), size=(30, 40))
        q, delta = quantize_array(x, k)
        ulp = np.spacing(np.max(np.abs(x)))
        assert np.max(np.abs(q - x)) <= delta / 2 + 4 * ulp
        again, delta_again = quantize_array(q, k)
        assert np.array_equal(again, q)
        assert delta_again == delta
        assert np.unique(q).size <= 2 ** k


def test_high_bit_depth_is_nearly_lossless(rng):
    w = DualWeights(rng.uniform(-1, 1, size=(20, 20)))
    q, delta = quantize_uniform(w, 32)
    assert np.max(np.abs(q.alpha - w.alpha)) < 1e-8
    assert delta > 0


def test_endpoints_are_preserved(rng):
    x = rng.normal(size=200)
    q, _ = quantize_array(x, 3)
    assert q[np.argmin(x)] == x.min()
    assert q[np.argmax(x)] == x.max()


def test_constant_matrix_is_flagged():
    w = DualWeights(np.full((3, 4), 0.7))
    q, delta = quantize_uniform(w, 4)
    assert delta == 0.0
    assert np.array_equal(q.alpha, w.alpha)
    stats = quantization_error_stats(w, 4)
    assert stats.degenerate and np.isnan(stats.ratio)


def test_quantizer_rejects_bit_depth():
    with pytest.raises(ValueError):
        quantize_array(np.arange(4.0), 1)
    with pytest.raises(ValueError):
        quantize_array(np.arange(4.0), 33)


def test_quantization_error_matches_uniform_model():
    """Uniform entries, k = 8, 10^6 samples: MSE within 5% of Delta^2 / 12"""
    rng = np.random.default_rng(2024)
    w = DualWeights(rng.uniform(0, 1, size=(1000, 1000)))
    stats = quantization_error_stats(w, 8)
    assert not stats.degenerate
    assert abs(stats.ratio - 1.0) <= 0.05


def test_lattice_entries_have_zero_error():
    w = DualWeights(np.array([[0.0, 0.25, 0.5], [0.75, 1.0, 0.5]]))
    stats = quantization_error_stats(w, 2)
    assert stats.delta == pytest.approx(1 / 3)
    w3 = DualWeights(np.array([[0.0, 1 / 3, 2 / 3], [1.0, 1.0, 0.0]]))
    assert quantization_error_stats(w3, 2).mse < 1e-30


def test_binarize_two_valued_symmetric_is_fixed():
    alpha = np.array([[2.0, -2.0, 2.0], [-2.0, 2.0, -2.0]])
    out = binarize(DualWeights(alpha), center='mean')
    assert np.array_equal(out.alpha, alpha)


def test_binarize_constant_input():
    out = binarize(DualWeights(np.full((2, 3), -0.5)))
    assert np.all(out.alpha == -0.5)


def test_binarize_scale_rules():
    alpha = np.array([[1.0, -1.0, 3.0, -3.0]])
    mad = binarize(DualWeights(alpha), scale='mad').alpha
    rms = binarize(DualWeights(alpha), scale='rms').alpha
    assert np.allclose(mad, [[2.0, -2.0, 2.0, -2.0]])
    assert np.allclose(rms, np.sqrt(5.0) * np.sign(alpha))
    med = binarize(DualWeights(np.array([[0.0, 1.0, 10.0]])), center='median').alpha
    assert np.unique(med).size == 2
    with pytest.raises(ValueError):
        binarize(DualWeights(alpha), center='mode')


def test_prune_by_hand():
    w = DualWeights(np.array([[0.1, -0.5, 0.2, -0.05]]))
    assert np.array_equal(prune_magnitude(w, 0.5).alpha, np.array([[0.0, -0.5, 0.2, 0.0]]))
    assert np.array_equal(prune_magnitude(w, 0.0).alpha, w.alpha)
    assert prune_threshold(w, 0.5) == pytest.approx(0.2)


def test_prune_support_grows_and_survivors_keep_values(rng):
    alpha = rng.normal(size=(15, 12))
    alpha[0, :4] = 0.3  # ties
    w = DualWeights(alpha)
    previous = np.zeros(alpha.shape, dtype=bool)
    for s in (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.9):
        pruned = prune_magnitude(w, s).alpha
        zeros = pruned == 0.0
        assert np.all(zeros[previous])
        assert np.count_nonzero(zeros) == int(np.floor(s * alpha.size + 0.5))
        assert np.array_equal(pruned[~zeros], alpha[~zeros])
        previous = zeros


def test_prune_rejects_sparsity():
    w = DualWeights(np.ones((2, 2)))
    for s in (-0.1, 1.0):
        with pytest.raises(ValueError):
            prune_magnitude(w, s)


def test_compression_keeps_training_report():
    report = TrainingReport('l2', True, 5, 1e-5)
    w = DualWeights(np.array([[0.5, -1.0], [2.0, 0.1]]), report=report)
    for spec in (CompressionSpec.for_bits(4), CompressionSpec.for_bits(1),
                 CompressionSpec.for_sparsity(0.25), CompressionSpec()):
        assert apply_compression(w, spec).report is report


def test_compression_spec():
    assert CompressionSpec.for_bits(1).kind == 'binarize'
    assert CompressionSpec.for_bits(8).kind == 'quantize'
    assert CompressionSpec.for_sparsity(0.2).parameter == 0.2
    assert CompressionSpec.for_bits(3).parameter == 3.0
    for bad in (dict(kind='zip'), dict(kind='quantize', bits=1), dict(kind='prune', sparsity=1.0),
                dict(center='mode'), dict(scale='max')):
        with pytest.raises(ValueError):
            CompressionSpec(**bad)


def test_apply_compression_dispatch(rng):
    w = DualWeights(rng.normal(size=(6, 5)))
    assert np.array_equal(apply_compression(w, CompressionSpec()).alpha, w.alpha)
    assert np.array_equal(apply_compression(w, CompressionSpec.for_bits(3)).alpha,
                          quantize_uniform(w, 3)[0].alpha)
    assert np.array_equal(apply_compression(w, CompressionSpec.for_bits(1, 'median', 'rms')).alpha,
                          binarize(w, 'median', 'rms').alpha)
    assert np.array_equal(apply_compression(w, CompressionSpec.for_sparsity(0.3)).alpha,
                          prune_magnitude(w, 0.3).alpha)
