"""
Retrieval dynamics for kernel Hopfield memories
Input potential, synchronous sign updates and convergence to attractors
"""

from dataclasses import dataclass

import numpy as np

from core import DualWeights, NetworkState, PatternSet
from kernel import KernelContext, kernel_vector, pack_patterns

FIXED_POINT = 'fixed-point'
CYCLE = 'cycle-detected'
MAX_ITERS = 'max-iters'

DEFAULT_MAX_ITERS = 100


@dataclass(frozen=True)
class RecallOutcome:
    final: NetworkState
    iterations: int
    status: str


def sign(h: np.ndarray) -> np.ndarray:
    """Bipolar sign with sign(0) := +1"""
    return np.where(np.asarray(h) >= 0, 1, -1).astype(np.int8)


def check_context(patterns: PatternSet, ctx: KernelContext):
    """Raise ValueError unless ctx was built from exactly these patterns"""
    if ctx.P != patterns.P:
        raise ValueError(f"kernel context covers {ctx.P} patterns, got {patterns.P}")
    if ctx.packed is not None and (ctx.packed.n != patterns.N or not np.array_equal(
            ctx.packed.bits, pack_patterns(patterns).bits)):
        raise ValueError("kernel context was built from different patterns")


def potential(s: NetworkState, patterns: PatternSet, weights: DualWeights,
              ctx: KernelContext) -> np.ndarray:
    """
    h_i(s) = sum_mu alpha_{mu i} K(s, xi^mu), computed as k(s)' A

    Args:
        s: Network state
        patterns: Stored patterns
        weights: Dual weights (P x N)
        ctx: Kernel context built from the same patterns

    Returns:
        Length-N potential vector
    """
    weights.check_matches(patterns)
    check_context(patterns, ctx)
    k = kernel_vector(s, patterns, ctx.gamma, packed=ctx.packed)
    return k @ weights.alpha


def update_sync(s: NetworkState, patterns: PatternSet, weights: DualWeights,
                ctx: KernelContext) -> NetworkState:
    """One synchronous update s'_i = sign(h_i(s))"""
    return NetworkState(sign(potential(s, patterns, weights, ctx)))


def recall(s0: NetworkState, patterns: PatternSet, weights: DualWeights, ctx: KernelContext,
           max_iters: int = DEFAULT_MAX_ITERS) -> RecallOutcome:
    """
    Iterate synchronous updates until a fixed point, a 2-cycle or max_iters

    Args:
        s0: Initial (typically noisy) state
        patterns: Stored patterns
        weights: Dual weights
        ctx: Kernel context
        max_iters: Update cap, >= 1

    Returns:
        RecallOutcome with the final state, update count and status
    """
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    previous = None
    current = s0
    for it in range(1, max_iters + 1):
        nxt = update_sync(current, patterns, weights, ctx)
        if nxt == current:
            return RecallOutcome(current, it, FIXED_POINT)
        if previous is not None and nxt == previous:
            return RecallOutcome(nxt, it, CYCLE)
        previous, current = current, nxt
    return RecallOutcome(current, max_iters, MAX_ITERS)
