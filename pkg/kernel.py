"""
RBF kernel over bipolar vectors
Gram matrices, kernel vectors and a bit-packed Hamming distance fast path
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from numba import njit
from scipy.linalg import eigvalsh

from core import NetworkState, PatternSet

WORD_BITS = 64

# Relative PSD tolerance: smallest eigenvalue >= -PSD_RTOL * largest
PSD_RTOL = 1e-8


@lru_cache(maxsize=64)
def _exp_table(gamma: float, n: int) -> np.ndarray:
    """exp(-4 * gamma * d) for d = 0..n (||x - y||^2 = 4 d for bipolar x, y)"""
    table = np.exp(-4.0 * gamma * np.arange(n + 1, dtype=np.float64))
    table.setflags(write=False)
    return table


def kernel_from_distance(d: np.ndarray, gamma: float, n: int) -> np.ndarray:
    """
    Map integer Hamming distances to kernel values

    Every kernel evaluation in the package goes through this lookup, so two
    paths that agree on distances agree on kernel values bit for bit.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    return _exp_table(float(gamma), int(n))[np.asarray(d, dtype=np.int64)]


def _as_bipolar_vector(x) -> np.ndarray:
    if isinstance(x, NetworkState):
        return x.s
    return np.asarray(x)


def hamming_distance(x, y) -> int:
    """Naive count of differing components"""
    x = _as_bipolar_vector(x)
    y = _as_bipolar_vector(y)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return int(np.count_nonzero(x != y))


def hamming_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """
    All pairwise Hamming distances between rows of X and rows of Y

    Uses the integer identity d = (N - x.y) / 2 for bipolar rows, so the
    result is exact.
    """
    X = np.atleast_2d(X).astype(np.int64)
    Y = np.atleast_2d(Y).astype(np.int64)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return (X.shape[1] - X @ Y.T) // 2


def rbf(x, y, gamma: float) -> float:
    """
    K(x, y) = exp(-gamma * ||x - y||^2) = exp(-4 * gamma * d_H(x, y))

    Args:
        x: Bipolar vector (array or NetworkState)
        y: Bipolar vector of the same length
        gamma: Kernel locality, > 0

    Returns:
        Kernel value in (0, 1]
    """
    d = hamming_distance(x, y)
    return float(kernel_from_distance(d, gamma, len(_as_bipolar_vector(x))))


# ---------- bit packing & popcount ----------

@njit(cache=True, nogil=True)
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True, nogil=True)
def _xor_popcount(a, b):
    total = 0
    for w in range(a.shape[0]):
        total += int(_popcount64(a[w] ^ b[w]))
    return total


@njit(cache=True, nogil=True)
def _distances_to_rows(query, table):
    out = np.empty(table.shape[0], dtype=np.int64)
    for r in range(table.shape[0]):
        out[r] = _xor_popcount(query, table[r])
    return out


@dataclass(frozen=True, eq=False)
class PackedPatterns:
    """
    Bipolar rows packed into 64-bit words

    Bit b of row r is set iff component b is +1. Padding bits beyond n are
    always 0 in every row, so they never contribute to an XOR count.
    """
    bits: np.ndarray
    n: int

    @property
    def words(self) -> int:
        return int(self.bits.shape[1])

    def unpack(self) -> PatternSet:
        raw = np.unpackbits(self.bits.astype('<u8').view(np.uint8), axis=1,
                            bitorder='little')[:, :self.n]
        return PatternSet(2 * raw.astype(np.int8) - 1)

    def row(self, r: int) -> np.ndarray:
        return self.bits[r]


def pack_rows(X: np.ndarray) -> PackedPatterns:
    """Pack a (rows x n) bipolar matrix into little-endian uint64 words"""
    X = np.atleast_2d(np.asarray(X))
    rows, n = X.shape
    words = (n + WORD_BITS - 1) // WORD_BITS
    padded = np.zeros((rows, words * WORD_BITS), dtype=np.uint8)
    padded[:, :n] = X > 0
    packed = np.packbits(padded, axis=1, bitorder='little')
    bits = np.ascontiguousarray(packed).view('<u8').astype(np.uint64)
    bits.setflags(write=False)
    return PackedPatterns(bits=bits, n=n)


def pack_patterns(patterns: PatternSet) -> PackedPatterns:
    return pack_rows(patterns.data)


def pack_state(s: NetworkState) -> PackedPatterns:
    return pack_rows(s.s[None, :])


def packed_hamming(a: PackedPatterns, b: PackedPatterns, i: int = 0, j: int = 0) -> int:
    """
    Hamming distance between row i of ``a`` and row j of ``b`` via XOR + popcount

    Args:
        a: Packed rows
        b: Packed rows of the same logical dimension
        i: Row index into a
        j: Row index into b

    Returns:
        Number of differing components
    """
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    return int(_xor_popcount(a.bits[i], b.bits[j]))


# ---------- Gram matrix & kernel vectors ----------

@dataclass(frozen=True, eq=False)
class KernelContext:
    """
    Kernel locality gamma plus the P x P Gram matrix over the stored patterns
    """
    gamma: float
    gram: np.ndarray
    packed: Optional[PackedPatterns] = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    @property
    def P(self) -> int:
        return int(self.gram.shape[0])

    def eigenvalues(self) -> np.ndarray:
        return eigvalsh(self.gram)

    def is_psd(self, rtol: float = PSD_RTOL) -> bool:
        ev = self.eigenvalues()
        return bool(ev[0] >= -rtol * max(ev[-1], 0.0))

    def largest_eigenvalue(self) -> float:
        return float(eigvalsh(self.gram, subset_by_index=[self.P - 1, self.P - 1])[0])


def gram(patterns: PatternSet, gamma: float) -> KernelContext:
    """
    Build the Gram matrix K[mu, nu] = rbf(xi^mu, xi^nu, gamma)

    Args:
        patterns: Stored patterns
        gamma: Kernel locality, > 0

    Returns:
        KernelContext carrying gamma, the Gram matrix and the packed patterns
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    D = hamming_matrix(patterns.data, patterns.data)
    K = kernel_from_distance(D, gamma, patterns.N)
    # exact symmetry: distances are symmetric integers
    K.setflags(write=False)
    return KernelContext(gamma=float(gamma), gram=K, packed=pack_patterns(patterns))


def kernel_vector(s: NetworkState, patterns: PatternSet, gamma: float,
                  packed: Optional[PackedPatterns] = None) -> np.ndarray:
    """
    Kernel values K(s, xi^mu) for every stored pattern

    With ``packed`` the distances come from the XOR/popcount path, otherwise
    from the integer dot product; both feed the same lookup table.
    """
    if s.n != patterns.N:
        raise ValueError(f"state length {s.n} does not match pattern dimension {patterns.N}")
    if packed is not None:
        if packed.n != s.n:
            raise ValueError(f"packed dimension {packed.n} does not match state length {s.n}")
        d = _distances_to_rows(pack_state(s).bits[0], packed.bits)
    else:
        d = hamming_matrix(s.s[None, :], patterns.data)[0]
    return kernel_from_distance(d, gamma, patterns.N)
