"""
Performance metrics for kernel Hopfield memories
Bit accuracy, stability margin, noisy recall accuracy and degradation deltas
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from sklearn.metrics import accuracy_score

from core import DualWeights, PatternSet, flip_noise
from dynamics import DEFAULT_MAX_ITERS, recall, sign
from kernel import KernelContext


@dataclass(frozen=True)
class MetricsReport:
    bit_accuracy: float
    stability_margin: float
    recall_accuracy: Optional[float] = None

    def __post_init__(self):
        for name in ('bit_accuracy', 'recall_accuracy'):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if not np.isfinite(self.stability_margin):
            raise ValueError("stability margin must be finite")


def stored_potentials(weights: DualWeights, patterns: PatternSet, ctx: KernelContext) -> np.ndarray:
    """
    h_i(xi^mu) for every stored pattern, shape P x N

    Row mu of the Gram matrix is the kernel vector of xi^mu, so this is K A.
    """
    weights.check_matches(patterns)
    if ctx.gram.shape[0] != patterns.P:
        raise ValueError(f"Gram matrix {ctx.gram.shape} does not match {patterns.P} patterns")
    return ctx.gram @ weights.alpha


def bit_accuracy(weights: DualWeights, patterns: PatternSet, ctx: KernelContext) -> float:
    """Fraction of (mu, i) with sign(h_i(xi^mu)) == xi^mu_i after one update"""
    H = stored_potentials(weights, patterns, ctx)
    return float(accuracy_score(patterns.data.ravel(), sign(H).ravel()))


def stability_margin(weights: DualWeights, patterns: PatternSet, ctx: KernelContext) -> float:
    """Mean alignment h_i(xi^mu) * xi^mu_i"""
    H = stored_potentials(weights, patterns, ctx)
    return float(np.mean(H * patterns.data))


def recall_accuracy(weights: DualWeights, patterns: PatternSet, ctx: KernelContext, rho: float,
                    trials: int, rng: np.random.Generator,
                    max_iters: int = DEFAULT_MAX_ITERS) -> Tuple[float, float]:
    """
    Bit-wise recall accuracy from noisy cues

    Trial t targets pattern t mod P, flips round(rho * N) of its bits, runs the
    dynamics and scores the final state (whatever its status) against the target.

    Args:
        weights: Dual weights
        patterns: Stored patterns
        ctx: Kernel context
        rho: Noise level in [0, 1]
        trials: Number of noisy cues
        rng: Generator for the flip positions
        max_iters: Update cap per recall

    Returns:
        (mean, standard deviation) of the per-trial matching fraction
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    scores = np.empty(trials)
    for t in range(trials):
        target = patterns.state(t % patterns.P)
        cue = flip_noise(target, rho, rng)
        outcome = recall(cue, patterns, weights, ctx, max_iters=max_iters)
        scores[t] = np.mean(outcome.final.s == target.s)
    return float(scores.mean()), float(scores.std())


def degradation(metric_baseline: float, metric_compressed: float) -> float:
    """baseline - compressed; positive means performance was lost"""
    return float(metric_baseline) - float(metric_compressed)


def evaluate(weights: DualWeights, patterns: PatternSet, ctx: KernelContext) -> MetricsReport:
    return MetricsReport(
        bit_accuracy=bit_accuracy(weights, patterns, ctx),
        stability_margin=stability_margin(weights, patterns, ctx),
    )
