"""
Desk-scale end-to-end checks (N=100, P/N=3, calibrated gamma)

Slow: run with `pytest -m slow`.
"""

from dataclasses import replace

import numpy as np
import pytest

from analysis import bimodality_stats
from experiments import (ExperimentConfig, _train_trial, calibrate_gamma, run_gamma_sweep,
                         run_noise_sweep, run_pruning_sweep, run_quantization_sweep,
                         run_scaling_experiment, run_walsh_experiment)
from metrics import bit_accuracy

pytestmark = pytest.mark.slow


def _calibrated(load):
    cfg = ExperimentConfig(n=100, load=load, trials=5, workers=-1)
    return replace(cfg, gamma=calibrate_gamma(cfg, cfg.candidates).gamma_star)


@pytest.fixture(scope='module')
def ridge():
    return _calibrated(3.0)


@pytest.fixture(scope='module')
def pn2():
    return _calibrated(2.0)


def _baseline_and_compression(cfg):
    accs = []
    for trial in range(cfg.trials):
        patterns, ctx, weights = _train_trial(cfg, trial, cfg.gamma)
        accs.append(bit_accuracy(weights, patterns, ctx))
    quant = run_quantization_sweep(replace(cfg, bits=(8, 2, 1)))
    prune = run_pruning_sweep(cfg)
    return np.array(accs), quant, prune


@pytest.mark.parametrize('which', ['ridge', 'pn2'])
def test_baseline_compression_and_pruning(request, which):
    cfg = request.getfixturevalue(which)
    accs, quant, prune = _baseline_and_compression(cfg)
    assert np.mean(accs == 1.0) >= 0.9

    acc = quant.means('bit_accuracy')
    assert acc[2.0] >= 0.99
    assert acc[1.0] >= 0.95
    if which == 'ridge':
        margin = quant.means('stability_margin')
        assert margin[2.0] > margin[8.0]

    pruned = prune.means('bit_accuracy').sort_index()
    assert pruned[0.0] - pruned[0.1] >= 0.01
    assert np.all(np.diff(pruned.to_numpy()) <= 1e-9)

    _, _, weights = _train_trial(cfg, 0, cfg.gamma)
    stats = bimodality_stats(weights)
    assert stats.central_mass < 0.05
    assert stats.bimodal and stats.mode_low < 0 < stats.mode_high


def test_noise_robustness(ridge):
    result = run_noise_sweep(replace(ridge, noise=(0.0, 0.2)))
    full = result.means('recall_full')[0.2]
    low = result.means('recall_2bit')[0.2]
    assert min(full, low) > 0.85
    assert abs(full - low) <= 0.05


def test_scaling_law_on_ridge(ridge):
    fit = run_scaling_experiment(ridge, regime='ridge').fit
    assert fit.available
    assert 0.5 <= fit.slope <= 1.2
    assert fit.r_squared >= 0.8


def test_local_regime_is_flat(ridge):
    result = run_scaling_experiment(ridge, regime='local')
    assert (result.means('relative_degradation').abs() <= 0.05).all()


def test_gamma_sweep_valley(ridge):
    result = run_gamma_sweep(ridge)
    deg = result.means('accuracy_degradation')
    assert (deg[deg.index > ridge.gamma] <= 0.01).all()
    assert deg[deg.index < ridge.gamma].max() > 0.10


def test_l1_concentrates_influence(ridge):
    walsh = run_walsh_experiment(replace(ridge, trials=3, samples=2048))
    assert 0 < walsh.gini['l2'] < walsh.gini['l1'] < 1
