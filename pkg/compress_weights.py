"""
Post-training compression of dual weights
Uniform k-bit quantization, 1-bit binarization and magnitude pruning
"""

from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from core import DualWeights

KINDS = ('none', 'quantize', 'binarize', 'prune')
CENTERS = ('mean', 'median')
SCALES = ('mad', 'rms')


@dataclass(frozen=True)
class CompressionSpec:
    """
    A transform applied to DualWeights

    quantize uses ``bits`` (2..32), binarize uses ``center`` and ``scale``,
    prune uses ``sparsity`` in [0, 1).
    """
    kind: str = 'none'
    bits: int = 32
    center: str = 'mean'
    scale: str = 'mad'
    sparsity: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"compression kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == 'quantize' and not 2 <= self.bits <= 32:
            raise ValueError(f"quantization needs 2 <= bits <= 32, got {self.bits}")
        if self.center not in CENTERS:
            raise ValueError(f"center must be one of {CENTERS}, got {self.center!r}")
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if self.kind == 'prune' and not 0.0 <= self.sparsity < 1.0:
            raise ValueError(f"sparsity must be in [0, 1), got {self.sparsity}")

    @classmethod
    def for_bits(cls, bits: int, center: str = 'mean', scale: str = 'mad') -> 'CompressionSpec':
        """k >= 2 quantizes, k = 1 binarizes"""
        if bits == 1:
            return cls(kind='binarize', bits=1, center=center, scale=scale)
        return cls(kind='quantize', bits=bits)

    @classmethod
    def for_sparsity(cls, sparsity: float) -> 'CompressionSpec':
        return cls(kind='prune', sparsity=sparsity)

    @property
    def parameter(self) -> float:
        if self.kind in ('quantize', 'binarize'):
            return float(self.bits)
        if self.kind == 'prune':
            return float(self.sparsity)
        return 0.0


class QuantizationErrorStats(NamedTuple):
    mse: float
    predicted: float
    ratio: float
    delta: float
    degenerate: bool


def quantize_array(x: np.ndarray, k: int) -> Tuple[np.ndarray, float]:
    """
    Q_k(x) = x_min + Delta * round((x - x_min) / Delta) over the whole array

    Rounding is half away from zero on the (non-negative) scaled value. The
    end points are lattice points and map to themselves exactly.

    Returns:
        (quantized array, Delta); Delta == 0 flags a constant input, which is
        returned unchanged
    """
    if not 2 <= k <= 32:
        raise ValueError(f"bit depth must be in [2, 32], got {k}")
    x = np.asarray(x, dtype=np.float64)
    x_min = float(x.min())
    x_max = float(x.max())
    if x_max == x_min:
        return x.copy(), 0.0
    top = (1 << k) - 1
    delta = (x_max - x_min) / top
    m = np.clip(np.floor((x - x_min) / delta + 0.5), 0, top)
    q = x_min + m * delta
    q[m == top] = x_max
    return q, delta


def quantize_uniform(weights: DualWeights, k: int) -> Tuple[DualWeights, float]:
    """
    k-bit uniform quantization of the full weight matrix

    Args:
        weights: Trained dual weights
        k: Bit depth, 2..32

    Returns:
        (quantized weights, step size Delta); Delta == 0 means the matrix was
        constant and is passed through unchanged
    """
    q, delta = quantize_array(weights.alpha, k)
    return weights.replace(q), delta


def binarize(weights: DualWeights, center: str = 'mean', scale: str = 'mad') -> DualWeights:
    """
    1-bit compression: c + s * sign(x - c)

    Args:
        weights: Trained dual weights
        center: 'mean' or 'median' of all entries
        scale: Reconstruction magnitude s; 'mad' = mean |x - c|,
            'rms' = sqrt(mean (x - c)^2)

    Returns:
        Weights taking exactly two values (one when all entries are equal)
    """
    if center not in CENTERS:
        raise ValueError(f"center must be one of {CENTERS}, got {center!r}")
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    x = weights.alpha
    c = float(np.mean(x)) if center == 'mean' else float(np.median(x))
    dev = x - c
    if scale == 'mad':
        s = float(np.mean(np.abs(dev)))
    else:
        s = float(np.sqrt(np.mean(dev ** 2)))
    return weights.replace(c + s * np.where(dev >= 0, 1.0, -1.0))


def prune_magnitude(weights: DualWeights, sparsity: float) -> DualWeights:
    """
    Zero the `sparsity` fraction of entries with the smallest magnitude

    The threshold is the nearest-rank quantile of |A|; entries are ordered by
    (|x|, row-major index) so ties resolve the same way on every platform and
    the zero set only grows with sparsity.

    Args:
        weights: Trained dual weights
        sparsity: Target fraction S in [0, 1)

    Returns:
        Pruned weights; surviving entries keep their exact values
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")
    flat = weights.alpha.ravel()
    count = int(np.floor(sparsity * flat.size + 0.5))
    if count == 0:
        return weights.replace(weights.alpha)
    order = np.argsort(np.abs(flat), kind='stable')
    pruned = flat.copy()
    pruned[order[:count]] = 0.0
    return weights.replace(pruned.reshape(weights.alpha.shape))


def prune_threshold(weights: DualWeights, sparsity: float) -> float:
    """The magnitude tau at the nearest rank for sparsity S"""
    mags = np.sort(np.abs(weights.alpha.ravel()), kind='stable')
    count = int(np.floor(sparsity * mags.size + 0.5))
    return float(mags[min(count, mags.size - 1)])


def quantization_error_stats(weights: DualWeights, k: int) -> QuantizationErrorStats:
    """
    Empirical quantization MSE against the uniform-error prediction Delta^2 / 12

    Returns:
        QuantizationErrorStats; ``degenerate`` is set (ratio NaN) when Delta == 0
    """
    if k < 2:
        raise ValueError(f"bit depth must be >= 2, got {k}")
    q, delta = quantize_array(weights.alpha, k)
    mse = float(np.mean((q - weights.alpha) ** 2))
    predicted = delta ** 2 / 12.0
    if delta == 0.0:
        return QuantizationErrorStats(mse, predicted, float('nan'), delta, True)
    return QuantizationErrorStats(mse, predicted, mse / predicted, delta, False)


def apply_compression(weights: DualWeights, spec: CompressionSpec) -> DualWeights:
    """Apply a CompressionSpec"""
    if spec.kind == 'quantize':
        return quantize_uniform(weights, spec.bits)[0]
    if spec.kind == 'binarize':
        return binarize(weights, spec.center, spec.scale)
    if spec.kind == 'prune':
        return prune_magnitude(weights, spec.sparsity)
    return weights
