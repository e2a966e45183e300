"""
Tests for KLR / Lasso training and weight snapshots
"""

import math

import numpy as np
import pytest

from compress_weights import CompressionSpec
from core import DualWeights, PatternSet, RngSeed, generate_patterns
from kernel import gram
from metrics import bit_accuracy
from train_model import (L1_FRACTION, SnapshotHeader, TrainConfig, _step_bounds, klr_train,
                         l1_lambda_max, lasso_train, load_weights, objective_gradient,
                         objective_value, save_weights, train, train_column, training_lambda)


def _instance(seed, p, n, gamma=0.1):
    patterns = generate_patterns(n, p, RngSeed(seed).stream(0, 'patterns'))
    return patterns, gram(patterns, gamma)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(regularizer='l3')
    with pytest.raises(ValueError):
        TrainConfig(lam=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(max_iters=0)
    with pytest.raises(ValueError):
        TrainConfig(tol=0.0)
    assert TrainConfig().resolved_lambda(300) == pytest.approx(3.0)
    assert TrainConfig(lam=0.2).resolved_lambda(300) == 0.2


def test_default_l1_strength_needs_lambda_max():
    cfg = TrainConfig(regularizer='l1')
    with pytest.raises(ValueError, match="lambda_max"):
        cfg.resolved_lambda(10)
    assert cfg.resolved_lambda(10, lambda_max=4.0) == pytest.approx(L1_FRACTION * 4.0)


def test_l1_lambda_max_is_the_zeroing_threshold():
    patterns, ctx = _instance(12, 10, 8)
    lam_max = l1_lambda_max(patterns, ctx)
    assert lam_max > 0
    at_max = lasso_train(patterns, ctx, TrainConfig(regularizer='l1', lam=lam_max * 1.001))
    assert np.count_nonzero(at_max.alpha) == 0
    default = lasso_train(patterns, ctx, TrainConfig(regularizer='l1'))
    zeros = np.count_nonzero(default.alpha == 0)
    assert 0 < zeros < default.alpha.size
    assert training_lambda(TrainConfig(regularizer='l1'), patterns, ctx) == pytest.approx(L1_FRACTION * lam_max)
    assert training_lambda(TrainConfig(), patterns, ctx) == pytest.approx(1e-2 * 10)


def test_objective_at_zero_weights():
    """sigma(0) = 1/2 gives P * N * log 2 and no penalty"""
    patterns, ctx = _instance(1, 5, 7)
    zero = DualWeights(np.zeros((5, 7)))
    for reg in ('l2', 'l1'):
        value = objective_value(patterns, ctx, zero, TrainConfig(regularizer=reg, lam=0.3))
        assert value == pytest.approx(5 * 7 * math.log(2), rel=1e-14)


def test_objective_hand_evaluation():
    """P = 2, N = 2 against the written-out formula"""
    patterns = PatternSet(np.array([[1, -1], [-1, -1]]))
    gamma = 0.2
    ctx = gram(patterns, gamma)
    A = np.array([[0.3, -0.7], [1.1, 0.4]])
    k = math.exp(-4 * gamma * 1)
    K = np.array([[1.0, k], [k, 1.0]])
    lam = 0.05
    expected = 0.0
    for j in range(2):
        f = K @ A[:, j]
        expected += sum(math.log1p(math.exp(-patterns.data[v, j] * f[v])) for v in range(2))
        expected += lam * float(A[:, j] @ K @ A[:, j])
    value = objective_value(patterns, ctx, DualWeights(A), TrainConfig(lam=lam))
    assert value == pytest.approx(expected, abs=1e-12)
    l1 = objective_value(patterns, ctx, DualWeights(A), TrainConfig(regularizer='l1', lam=lam))
    assert l1 == pytest.approx(expected - lam * sum(float(A[:, j] @ K @ A[:, j]) for j in range(2))
                               + lam * float(np.abs(A).sum()), abs=1e-12)


def test_gradient_matches_finite_differences(rng):
    """20 random instances, central differences, relative error <= 1e-5"""
    for trial in range(20):
        p = int(rng.integers(1, 9))
        n = int(rng.integers(1, 9))
        patterns, ctx = _instance(100 + trial, p, n, gamma=float(rng.uniform(0.01, 0.5)))
        cfg = TrainConfig(lam=float(rng.uniform(0.0, 0.5)))
        A = rng.normal(scale=0.5, size=(p, n))
        analytic = objective_gradient(patterns, ctx, DualWeights(A), cfg)
        numeric = np.zeros_like(A)
        h = 1e-6
        for idx in np.ndindex(A.shape):
            up = A.copy()
            down = A.copy()
            up[idx] += h
            down[idx] -= h
            numeric[idx] = (objective_value(patterns, ctx, DualWeights(up), cfg)
                            - objective_value(patterns, ctx, DualWeights(down), cfg)) / (2 * h)
        err = np.linalg.norm(numeric - analytic) / max(np.linalg.norm(analytic), 1e-12)
        assert err <= 1e-5


def test_single_pattern_is_learned():
    patterns = PatternSet(np.array([[1, -1, -1, 1, 1]]))
    ctx = gram(patterns, 0.1)
    weights = klr_train(patterns, ctx)
    h = ctx.gram @ weights.alpha
    assert np.array_equal(np.where(h[0] >= 0, 1, -1), patterns.data[0])
    assert np.all(h[0] * patterns.data[0] > 0)


def test_heavy_regularization_shrinks_weights():
    patterns, ctx = _instance(2, 4, 6)
    weights = klr_train(patterns, ctx, TrainConfig(lam=1e6))
    assert np.max(np.abs(weights.alpha)) < 1e-5
    margins = (ctx.gram @ weights.alpha) * patterns.data
    assert np.max(np.abs(margins)) < 1e-5


def test_small_model_converges_and_recalls(small_model):
    patterns, ctx, weights = small_model
    assert weights.report is not None
    assert weights.report.converged
    assert weights.report.unconverged_columns == ()
    assert bit_accuracy(weights, patterns, ctx) == 1.0
    # KLR solutions have no exact zeros
    assert np.count_nonzero(weights.alpha == 0) == 0


def test_descent_is_monotone():
    patterns, ctx = _instance(3, 8, 8)
    lam = 1e-2 * 8
    step0, step_max = _step_bounds(ctx, lam)
    for j in range(8):
        history = []
        train_column(ctx.gram, patterns.data[:, j].astype(float), lam, TrainConfig(),
                     step0, step_max, history=history)
        assert all(b <= a for a, b in zip(history, history[1:]))


def test_columns_are_independent():
    """Column order and worker count do not change a single bit"""
    patterns, ctx = _instance(4, 10, 6)
    cfg = TrainConfig()
    lam = cfg.resolved_lambda(10)
    step0, step_max = _step_bounds(ctx, lam)
    labels = patterns.data.astype(np.float64)
    reversed_cols = {j: train_column(ctx.gram, labels[:, j], lam, cfg, step0, step_max).alpha
                     for j in reversed(range(6))}
    serial = klr_train(patterns, ctx, cfg)
    parallel = klr_train(patterns, ctx, cfg, n_jobs=2)
    assert np.array_equal(serial.alpha, parallel.alpha)
    for j in range(6):
        assert np.array_equal(serial.alpha[:, j], reversed_cols[j])


def test_negated_patterns_keep_accuracy():
    patterns, ctx = _instance(5, 8, 10)
    flipped = patterns.negated()
    w = klr_train(patterns, ctx)
    w_neg = klr_train(flipped, gram(flipped, ctx.gamma))
    assert bit_accuracy(w, patterns, ctx) == bit_accuracy(w_neg, flipped, gram(flipped, ctx.gamma))


def test_nonconvergence_is_reported():
    patterns, ctx = _instance(6, 12, 8)
    with pytest.warns(Warning):
        weights = klr_train(patterns, ctx, TrainConfig(max_iters=1, tol=1e-12))
    assert not weights.report.converged
    assert len(weights.report.unconverged_columns) == 8
    assert weights.report.final_norm > 0


def test_lasso_large_lambda_gives_zero_matrix():
    patterns, ctx = _instance(7, 6, 5)
    weights = lasso_train(patterns, ctx, TrainConfig(regularizer='l1', lam=1e6))
    assert np.count_nonzero(weights.alpha) == 0
    assert weights.report.converged


def test_lasso_sparsity_grows_with_lambda():
    patterns, ctx = _instance(8, 12, 8)
    zeros = []
    for lam in (0.001, 0.1, 1.0):
        w = lasso_train(patterns, ctx, TrainConfig(regularizer='l1', lam=lam))
        zeros.append(int(np.count_nonzero(w.alpha == 0)))
    assert zeros == sorted(zeros)
    assert zeros[-1] > 0


def test_lasso_without_penalty_tracks_klr():
    """With lambda = 0 both trainers minimize the same data term"""
    patterns, ctx = _instance(9, 4, 8)
    start = 4 * 8 * math.log(2)
    l2 = klr_train(patterns, ctx, TrainConfig(lam=0.0, max_iters=3000, tol=1e-6))
    l1 = lasso_train(patterns, ctx, TrainConfig(regularizer='l1', lam=0.0, max_iters=3000, tol=1e-6))
    obj_l2 = objective_value(patterns, ctx, l2, TrainConfig(lam=0.0))
    obj_l1 = objective_value(patterns, ctx, l1, TrainConfig(regularizer='l1', lam=0.0))
    assert obj_l2 < 0.05 * start
    assert obj_l1 < 0.05 * start
    assert bit_accuracy(l1, patterns, ctx) == bit_accuracy(l2, patterns, ctx) == 1.0


def test_train_dispatches_on_regularizer():
    patterns, ctx = _instance(10, 5, 4)
    assert train(patterns, ctx, TrainConfig(regularizer='l1', lam=0.01)).report.regularizer == 'l1'
    assert train(patterns, ctx, TrainConfig()).report.regularizer == 'l2'
    with pytest.raises(ValueError):
        klr_train(patterns, ctx, TrainConfig(regularizer='l1'))
    with pytest.raises(ValueError):
        lasso_train(patterns, ctx, TrainConfig())


def test_gram_mismatch_rejected():
    patterns, _ = _instance(11, 5, 4)
    other = gram(generate_patterns(4, 3, np.random.default_rng(0)), 0.1)
    with pytest.raises(ValueError):
        klr_train(patterns, other)


def test_snapshot_round_trip(tmp_path, small_model):
    _, ctx, weights = small_model
    header = SnapshotHeader(gamma=ctx.gamma, lam=6e-2, regularizer='l1', seed=3,
                            compression=CompressionSpec.for_bits(1, 'median', 'rms'))
    path = save_weights(weights, str(tmp_path / 'w.khmw'), header)
    loaded, loaded_header = load_weights(path)
    assert np.array_equal(loaded.alpha, weights.alpha)
    assert loaded_header == header
    assert loaded_header.compression.kind == 'binarize'

    pruned = SnapshotHeader(gamma=ctx.gamma, lam=6e-2, compression=CompressionSpec.for_sparsity(0.3))
    _, pruned_header = load_weights(save_weights(weights, str(tmp_path / 'p.khmw'), pruned))
    assert pruned_header.compression == CompressionSpec.for_sparsity(0.3)


def test_snapshot_errors(tmp_path, small_model):
    _, _, weights = small_model
    with pytest.raises(FileNotFoundError):
        load_weights(str(tmp_path / 'missing.khmw'))
    path = save_weights(weights, str(tmp_path / 'w.khmw'), SnapshotHeader(gamma=0.1, lam=0.0))
    blob = open(path, 'rb').read()
    bad_magic = tmp_path / 'bad.khmw'
    bad_magic.write_bytes(b'XXXX' + blob[4:])
    with pytest.raises(ValueError, match="magic"):
        load_weights(str(bad_magic))
    truncated = tmp_path / 'short.khmw'
    truncated.write_bytes(blob[:-8])
    with pytest.raises(ValueError, match="payload"):
        load_weights(str(truncated))
    with pytest.raises(ValueError, match="regularizer"):
        save_weights(weights, str(tmp_path / 'x.khmw'), SnapshotHeader(gamma=0.1, lam=0.0, regularizer='l3'))
    unknown_kind = tmp_path / 'kind.khmw'
    # byte 41 holds the compression tag
    unknown_kind.write_bytes(blob[:41] + bytes([9]) + blob[42:])
    with pytest.raises(ValueError, match="compression tag"):
        load_weights(str(unknown_kind))
