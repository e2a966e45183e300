"""
Core data types for kernel Hopfield memories
Bipolar patterns, network states, dual weights and seeded random streams
"""

import hashlib
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

# Guard against accidental overflow-scale allocations (P*N entries)
MAX_ENTRIES = 1 << 31

CODE_VERSION = "khm-0.3.0"


def is_quiet() -> bool:
    """True when progress output is switched off (KHM_QUIET=true)"""
    return os.environ.get('KHM_QUIET') == 'true'


def _require_bipolar(data: np.ndarray, what: str) -> np.ndarray:
    data = np.asarray(data)
    if data.size and not np.all((data == 1) | (data == -1)):
        raise ValueError(f"{what} entries must be exactly -1 or +1")
    out = data.astype(np.int8)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class NetworkState:
    """A bipolar network state s in {-1, +1}^N"""
    s: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s)
        if s.ndim != 1 or s.shape[0] < 1:
            raise ValueError(f"state must be a non-empty vector, got shape {s.shape}")
        object.__setattr__(self, 's', _require_bipolar(s, "state"))

    @property
    def n(self) -> int:
        return int(self.s.shape[0])

    def hamming(self, other: 'NetworkState') -> int:
        if other.n != self.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")
        return int(np.count_nonzero(self.s != other.s))

    def __eq__(self, other) -> bool:
        return isinstance(other, NetworkState) and np.array_equal(self.s, other.s)


@dataclass(frozen=True, eq=False)
class PatternSet:
    """
    P stored bipolar patterns of dimension N (row mu is pattern xi^mu)
    """
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"patterns must be a non-empty P x N matrix, got shape {data.shape}")
        object.__setattr__(self, 'data', _require_bipolar(data, "pattern"))

    @property
    def P(self) -> int:
        return int(self.data.shape[0])

    @property
    def N(self) -> int:
        return int(self.data.shape[1])

    @property
    def load(self) -> float:
        return self.P / self.N

    def state(self, mu: int) -> NetworkState:
        return NetworkState(self.data[mu])

    def negated(self) -> 'PatternSet':
        return PatternSet(-self.data.astype(np.int16))

    def __eq__(self, other) -> bool:
        return isinstance(other, PatternSet) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class TrainingReport:
    """Convergence summary of a per-neuron training run"""
    regularizer: str
    converged: bool
    iterations: int
    final_norm: float
    unconverged_columns: Tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class DualWeights:
    """
    The P x N dual variable matrix A (row mu = pattern, column i = neuron)
    """
    alpha: np.ndarray
    report: Optional[TrainingReport] = field(default=None)

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64)
        if alpha.ndim != 2 or alpha.shape[0] < 1 or alpha.shape[1] < 1:
            raise ValueError(f"weights must be a non-empty P x N matrix, got shape {alpha.shape}")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("weights must be finite")
        alpha.setflags(write=False)
        object.__setattr__(self, 'alpha', alpha)

    @property
    def P(self) -> int:
        return int(self.alpha.shape[0])

    @property
    def N(self) -> int:
        return int(self.alpha.shape[1])

    def replace(self, alpha: np.ndarray) -> 'DualWeights':
        """Same provenance, new values (used by the compression transforms)"""
        return DualWeights(alpha, report=self.report)

    def __neg__(self) -> 'DualWeights':
        return self.replace(-self.alpha)

    def __add__(self, other: 'DualWeights') -> 'DualWeights':
        return DualWeights(self.alpha + other.alpha)

    def check_matches(self, patterns: PatternSet):
        if self.alpha.shape != patterns.data.shape:
            raise ValueError(
                f"weights shape {self.alpha.shape} does not match patterns {patterns.data.shape}"
            )


def _tag_digest(tag: str) -> int:
    # Python's hash() is salted per process; blake2b is stable everywhere
    return int.from_bytes(hashlib.blake2b(tag.encode('utf-8'), digest_size=4).digest(), 'little')


@dataclass(frozen=True)
class RngSeed:
    """
    Base seed from which every per-trial, per-purpose stream is derived

    Stream (base, trial, tag) is a numpy SeedSequence with entropy=base and
    spawn_key=(trial, digest(tag)), feeding a PCG64 generator. New tags never
    perturb the streams of existing ones.
    """
    base: int

    def __post_init__(self):
        if not 0 <= int(self.base) < (1 << 64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.base}")

    def stream(self, trial: int, tag: str) -> np.random.Generator:
        if trial < 0:
            raise ValueError(f"trial index must be >= 0, got {trial}")
        return derive_rng(self.base, trial, tag)


def derive_rng(base: int, trial: int, tag: str) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(base), spawn_key=(int(trial), _tag_digest(tag)))
    return np.random.Generator(np.random.PCG64(seq))


def generate_patterns(n: int, p: int, rng: np.random.Generator) -> PatternSet:
    """
    Draw P unbiased i.i.d. bipolar patterns of dimension N

    Args:
        n: Neuron count N
        p: Pattern count P
        rng: Generator derived from an RngSeed

    Returns:
        PatternSet with each entry +1 or -1 with probability 1/2
    """
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    if n * p > MAX_ENTRIES:
        raise ValueError(f"pattern matrix {p} x {n} is too large")
    bits = rng.integers(0, 2, size=(p, n), dtype=np.int8)
    return PatternSet(2 * bits - 1)


def flip_count(n: int, rho: float) -> int:
    """round(rho * N) with halves rounded up"""
    return int(np.floor(rho * n + 0.5))


def flip_noise(state: NetworkState, rho: float, rng: np.random.Generator) -> NetworkState:
    """
    Flip exactly round(rho * N) distinct, uniformly chosen components

    Args:
        state: Clean state
        rho: Fraction of components to flip, in [0, 1]
        rng: Generator for the position draw

    Returns:
        New state at Hamming distance round(rho * N) from the input
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    count = flip_count(state.n, rho)
    s = state.s.astype(np.int8)
    if count:
        positions = rng.choice(state.n, size=count, replace=False)
        s[positions] *= -1
    return NetworkState(s)
