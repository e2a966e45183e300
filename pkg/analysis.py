"""
Structural analysis of trained kernel Hopfield memories
Walsh influence, Gini inequality, weight bimodality and power-law fits
"""

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import linregress
from sklearn.metrics import r2_score

from core import DualWeights, PatternSet
from dynamics import sign
from kernel import KernelContext, hamming_matrix, kernel_from_distance

DEFAULT_SAMPLES = 4096
DEFAULT_BINS = 101
DEFAULT_TARGETS = 16

# A valley shallower than this fraction of the smaller peak is noise, not a second mode
UNIMODAL_DEPTH = 0.5

# Exhaustive enumeration limit (2^n states)
MAX_EXHAUSTIVE_N = 20


@dataclass(frozen=True, eq=False)
class InfluenceProfile:
    """Per-input influence I_i(h_j) on the sign of one output neuron"""
    target: int
    influence: np.ndarray
    samples: int
    cross_only: bool = True

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if np.any(self.influence < 0) or np.any(self.influence > 1):
            raise ValueError("influence values must lie in [0, 1]")

    def summary_values(self) -> np.ndarray:
        """Influences used in summaries (self term dropped when cross_only)"""
        if not self.cross_only:
            return self.influence
        return np.delete(self.influence, self.target)


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float
    points_used: int
    available: bool = True

    def predict(self, delta_squared: np.ndarray) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(delta_squared) ** self.slope


@dataclass(frozen=True)
class BimodalityStats:
    mode_low: float
    mode_high: float
    central_mass: float
    valley_depth: float
    bimodal: bool


# ---------- Walsh influence ----------

def random_states(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """m uniform states from {-1, 1}^n, one per row"""
    return (2 * rng.integers(0, 2, size=(m, n), dtype=np.int8) - 1).astype(np.int8)


def all_states(n: int) -> np.ndarray:
    """Every state of {-1, 1}^n (2^n rows)"""
    if not 1 <= n <= MAX_EXHAUSTIVE_N:
        raise ValueError(f"exhaustive enumeration needs 1 <= n <= {MAX_EXHAUSTIVE_N}, got {n}")
    codes = np.arange(1 << n, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def _influence_on_states(fn: Callable[[np.ndarray], np.ndarray], states: np.ndarray) -> np.ndarray:
    base = sign(fn(states))
    n = states.shape[1]
    influence = np.empty(n)
    for i in range(n):
        flipped = states.copy()
        flipped[:, i] *= -1
        influence[i] = np.mean(sign(fn(flipped)) != base)
    return influence


def function_influence(fn: Callable[[np.ndarray], np.ndarray], n: int, m: int,
                       rng: np.random.Generator, target: int = 0,
                       cross_only: bool = False) -> InfluenceProfile:
    """
    Monte Carlo influence of every input on sign(fn) for an arbitrary function

    Args:
        fn: Maps a batch of states (rows) to real outputs
        n: Input dimension
        m: Number of uniform base states, shared across coordinates
        rng: Generator for the base states
        target: Neuron index recorded in the profile
        cross_only: Drop the target's self term from summaries

    Returns:
        InfluenceProfile
    """
    if m < 1:
        raise ValueError(f"sample count must be >= 1, got {m}")
    states = random_states(n, m, rng)
    return InfluenceProfile(target, _influence_on_states(fn, states), m, cross_only)


def exhaustive_influence(fn: Callable[[np.ndarray], np.ndarray], n: int,
                         target: int = 0, cross_only: bool = False) -> InfluenceProfile:
    """Exact influence by enumerating all 2^n states"""
    states = all_states(n)
    return InfluenceProfile(target, _influence_on_states(fn, states), states.shape[0], cross_only)


def network_output(weights: DualWeights, patterns: PatternSet, ctx: KernelContext,
                   j: int) -> Callable[[np.ndarray], np.ndarray]:
    """h_j as a function of a batch of states"""
    column = weights.alpha[:, j]

    def h_j(states: np.ndarray) -> np.ndarray:
        D = hamming_matrix(states, patterns.data)
        return kernel_from_distance(D, ctx.gamma, patterns.N) @ column

    return h_j


def walsh_influence(weights: DualWeights, patterns: PatternSet, ctx: KernelContext, j: int,
                    m: int, rng: np.random.Generator, cross_only: bool = True) -> InfluenceProfile:
    """
    Influence of each input s_i on sign(h_j(s)), estimated on m uniform states

    The same m base states serve every coordinate. Flipping s_i moves the
    distance to pattern mu by s_i * xi^mu_i, so flipped potentials come from
    the base distance matrix without recomputing it.

    Args:
        weights: Dual weights
        patterns: Stored patterns
        ctx: Kernel context
        j: Target neuron in [0, N)
        m: Sample count, >= 1
        rng: Generator for the base states
        cross_only: Exclude i = j from summaries

    Returns:
        InfluenceProfile for neuron j
    """
    weights.check_matches(patterns)
    if m < 1:
        raise ValueError(f"sample count must be >= 1, got {m}")
    if not 0 <= j < patterns.N:
        raise ValueError(f"target neuron must be in [0, {patterns.N}), got {j}")
    states = random_states(patterns.N, m, rng)
    column = weights.alpha[:, j]
    xi = patterns.data.astype(np.int64)
    D = hamming_matrix(states, patterns.data)
    base = sign(kernel_from_distance(D, ctx.gamma, patterns.N) @ column)
    influence = np.empty(patterns.N)
    for i in range(patterns.N):
        D_flip = D + np.outer(states[:, i].astype(np.int64), xi[:, i])
        flipped = sign(kernel_from_distance(D_flip, ctx.gamma, patterns.N) @ column)
        influence[i] = np.mean(flipped != base)
    return InfluenceProfile(j, influence, m, cross_only)


def target_neurons(n: int, count: int = DEFAULT_TARGETS) -> np.ndarray:
    """`count` evenly spaced neuron indices in [0, n)"""
    count = max(1, min(count, n))
    return np.unique(np.linspace(0, n - 1, count).round().astype(int))


def total_influence(profile: InfluenceProfile) -> float:
    """Sum of influences over the summarized coordinates"""
    return float(np.sum(profile.summary_values()))


# ---------- inequality ----------

def gini(values: Iterable[float]) -> float:
    """
    Gini coefficient via the sorted-rank identity

    G = sum_a sum_b |x_a - x_b| / (2 n^2 mean)
      = sum_i (2 i - n - 1) x_(i) / (n sum x)   (i = 1..n, ascending)

    Args:
        values: Non-negative values with a positive mean

    Returns:
        Coefficient in [0, 1)
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("gini needs at least one value")
    if np.any(x < 0):
        raise ValueError("gini is undefined for negative values")
    total = float(np.sum(x))
    if total <= 0:
        raise ValueError("gini is undefined for an all-zero input")
    n = x.size
    ranks = 2.0 * np.arange(1, n + 1, dtype=np.float64) - n - 1
    return float(np.sum(ranks * x) / (n * total))


def pooled_gini(profiles: Sequence[InfluenceProfile]) -> float:
    """Gini over the summary values of several profiles pooled together"""
    return gini(np.concatenate([p.summary_values() for p in profiles]))


def lorenz_curve(values: Iterable[float]) -> np.ndarray:
    """Cumulative share of the total held by the smallest k values, k = 0..n"""
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    total = float(np.sum(x))
    if total <= 0:
        raise ValueError("Lorenz curve is undefined for an all-zero input")
    return np.concatenate([[0.0], np.cumsum(x) / total])


# ---------- weight distribution ----------

def weight_histogram(values: np.ndarray, bins: int = DEFAULT_BINS):
    """Raw counts over [min, max] (no smoothing)"""
    if bins < 10:
        raise ValueError(f"need at least 10 bins, got {bins}")
    x = np.asarray(values, dtype=np.float64).ravel()
    return np.histogram(x, bins=bins, range=(float(x.min()), float(x.max())))


def bimodality_stats(weights, bins: int = DEFAULT_BINS) -> BimodalityStats:
    """
    Locate the two dominant modes of the weight histogram

    The two peaks with the largest prominence are taken as modes; when fewer
    than two peaks exist, or the valley between them keeps at least half of
    the smaller peak's count, the distribution is reported as unimodal with
    both modes at the tallest bin.

    Args:
        weights: DualWeights or any array of values
        bins: Histogram bin count over [min, max], >= 10

    Returns:
        BimodalityStats
    """
    x = weights.alpha if isinstance(weights, DualWeights) else np.asarray(weights, dtype=np.float64)
    x = x.ravel()
    counts, edges = weight_histogram(x, bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    max_abs = float(np.max(np.abs(x)))
    central_mass = float(np.mean(np.abs(x) < 0.1 * max_abs)) if max_abs > 0 else 1.0

    # zero padding lets edge bins count as peaks
    padded = np.concatenate([[0], counts, [0]])
    peaks, props = find_peaks(padded, prominence=0)
    peaks = peaks - 1
    tallest = float(centers[int(np.argmax(counts))])
    if peaks.size < 2:
        return BimodalityStats(tallest, tallest, central_mass, 1.0, False)

    order = np.argsort(-props['prominences'], kind='stable')
    lo, hi = sorted(int(p) for p in peaks[order[:2]])
    valley = float(np.min(counts[lo:hi + 1]))
    depth = valley / float(min(counts[lo], counts[hi]))
    if depth >= UNIMODAL_DEPTH:
        return BimodalityStats(tallest, tallest, central_mass, depth, False)
    return BimodalityStats(float(centers[lo]), float(centers[hi]), central_mass, depth, True)


# ---------- scaling ----------

def fit_power_law(delta_squared: Sequence[float], degradation: Sequence[float]) -> PowerLawFit:
    """
    Least-squares line through (log Delta^2, log degradation)

    Only pairs with strictly positive degradation and Delta^2 are used; with
    fewer than two such points the fit is reported as unavailable.

    Args:
        delta_squared: Squared quantization steps
        degradation: Matching metric degradations

    Returns:
        PowerLawFit with slope beta, log-space intercept and R^2
    """
    x = np.asarray(delta_squared, dtype=np.float64)
    y = np.asarray(degradation, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    used = int(np.count_nonzero(keep))
    if used < 2 or np.unique(x[keep]).size < 2:
        return PowerLawFit(float('nan'), float('nan'), float('nan'), used, available=False)
    log_x = np.log(x[keep])
    log_y = np.log(y[keep])
    fit = linregress(log_x, log_y)
    r2 = float(r2_score(log_y, fit.intercept + fit.slope * log_x)) if used > 2 else 1.0
    return PowerLawFit(float(fit.slope), float(fit.intercept), r2, used)


def optional_fit_label(fit: Optional[PowerLawFit]) -> str:
    if fit is None or not fit.available:
        return "fit unavailable"
    return f"beta = {fit.slope:.3f} (R^2 = {fit.r_squared:.3f}, {fit.points_used} pts)"
