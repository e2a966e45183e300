"""
Kernel Logistic Regression training for kernel Hopfield memories
Learns the dual weights column by column (one logistic problem per neuron)
"""

import os
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit
from sklearn.exceptions import ConvergenceWarning

from compress_weights import CENTERS, SCALES, CompressionSpec
from core import DualWeights, PatternSet, TrainingReport, is_quiet
from kernel import KernelContext

REGULARIZERS = ('l2', 'l1')

# Default kernel-norm strength per stored pattern
L2_SCALE = 1e-2
# Default L1 strength as a fraction of lambda_max
L1_FRACTION = 0.5

# Backtracking gives up once the step falls below this
MIN_STEP = 1e-20


@dataclass(frozen=True)
class TrainConfig:
    """
    Training hyperparameters

    lam=None resolves to L2_SCALE * P for the kernel-norm penalty and to
    L1_FRACTION * lambda_max for the L1 penalty, where lambda_max is the
    smallest strength whose solution is all zeros (see l1_lambda_max).
    L2 training stops once the gradient norm is at most tol * P.
    """
    regularizer: str = 'l2'
    lam: Optional[float] = None
    max_iters: int = 3000
    tol: float = 1e-5

    def __post_init__(self):
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if self.lam is not None and self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")

    def resolved_lambda(self, p: int, lambda_max: Optional[float] = None) -> float:
        if self.lam is not None:
            return float(self.lam)
        if self.regularizer == 'l1':
            if lambda_max is None:
                raise ValueError("the default L1 strength needs lambda_max from the training data")
            return L1_FRACTION * float(lambda_max)
        return L2_SCALE * p


@dataclass
class ColumnResult:
    alpha: np.ndarray
    iterations: int
    final_norm: float
    converged: bool


def _targets(patterns: PatternSet) -> np.ndarray:
    # t = (xi + 1) / 2, one column per output neuron
    return (patterns.data.astype(np.float64) + 1.0) / 2.0


def _column_loss(f: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.logaddexp(0.0, -y * f)))


def _check_inputs(patterns: PatternSet, ctx: KernelContext):
    if ctx.gram.shape != (patterns.P, patterns.P):
        raise ValueError(
            f"Gram matrix {ctx.gram.shape} does not match {patterns.P} stored patterns"
        )


def l1_lambda_max(patterns: PatternSet, ctx: KernelContext) -> float:
    """
    Smallest L1 strength for which zero weights are optimal in every column

    At A = 0 the data-term gradient is K (1/2 - T); zero stays put under the
    soft threshold once lambda covers its largest entry.
    """
    _check_inputs(patterns, ctx)
    return float(np.max(np.abs(ctx.gram @ (0.5 - _targets(patterns)))))


def training_lambda(cfg: TrainConfig, patterns: PatternSet, ctx: KernelContext) -> float:
    """The penalty strength actually used for these patterns"""
    if cfg.regularizer == 'l1' and cfg.lam is None:
        return cfg.resolved_lambda(patterns.P, l1_lambda_max(patterns, ctx))
    return cfg.resolved_lambda(patterns.P)


def objective_value(patterns: PatternSet, ctx: KernelContext, weights: DualWeights,
                    cfg: TrainConfig) -> float:
    """
    Total training objective summed over output neurons

    L2: sum_j [ sum_nu log(1 + exp(-xi_j^nu (K a_j)_nu)) + lam * a_j' K a_j ]
    L1: same data term + lam * ||A||_1
    """
    _check_inputs(patterns, ctx)
    weights.check_matches(patterns)
    lam = training_lambda(cfg, patterns, ctx)
    A = weights.alpha
    F = ctx.gram @ A
    data = float(np.sum(np.logaddexp(0.0, -patterns.data * F)))
    if cfg.regularizer == 'l2':
        return data + lam * float(np.sum(A * F))
    return data + lam * float(np.sum(np.abs(A)))


def objective_gradient(patterns: PatternSet, ctx: KernelContext, weights: DualWeights,
                       cfg: TrainConfig) -> np.ndarray:
    """
    Gradient of the smooth part of the objective, shape P x N

    K (sigma(K A) - T) plus 2 lam K A for the kernel-norm penalty. The L1
    penalty is handled by the proximal step and is not included.
    """
    _check_inputs(patterns, ctx)
    weights.check_matches(patterns)
    F = ctx.gram @ weights.alpha
    G = ctx.gram @ (expit(F) - _targets(patterns))
    if cfg.regularizer == 'l2':
        G = G + 2.0 * training_lambda(cfg, patterns, ctx) * F
    return G


def _step_bounds(ctx: KernelContext, lam: float) -> Tuple[float, float]:
    lmax = ctx.largest_eigenvalue()
    lipschitz = 0.25 * lmax ** 2 + 2.0 * lam * lmax
    return 4.0 / lipschitz, 64.0 / lipschitz


def train_column(K: np.ndarray, y: np.ndarray, lam: float, cfg: TrainConfig,
                 step0: float, step_max: float,
                 history: Optional[List[float]] = None) -> ColumnResult:
    """
    Gradient descent with backtracking for one output neuron (L2 penalty)

    Args:
        K: Gram matrix
        y: Bipolar labels of this neuron across stored patterns
        lam: Penalty strength
        cfg: Stopping rule (tol, max_iters)
        step0: Initial step size
        step_max: Upper bound for step growth after accepted steps
        history: Optional list receiving the objective after every accepted step

    Returns:
        ColumnResult with the learned column and convergence info
    """
    P = K.shape[0]
    t = (y + 1.0) / 2.0
    a = np.zeros(P)
    f = np.zeros(P)
    obj = _column_loss(f, y)
    if history is not None:
        history.append(obj)
    step = step0
    gnorm = np.inf
    for it in range(1, cfg.max_iters + 1):
        g = K @ (expit(f) - t) + 2.0 * lam * f
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.tol * P:
            return ColumnResult(a, it, gnorm, True)
        while step > MIN_STEP:
            a_new = a - step * g
            f_new = K @ a_new
            obj_new = _column_loss(f_new, y) + lam * float(a_new @ f_new)
            # Armijo sufficient decrease
            if obj_new <= obj - 0.5 * step * gnorm ** 2:
                break
            step *= 0.5
        else:
            return ColumnResult(a, it, gnorm, False)
        a, f, obj = a_new, f_new, obj_new
        if history is not None:
            history.append(obj)
        step = min(2.0 * step, step_max)
    return ColumnResult(a, cfg.max_iters, gnorm, False)


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def train_column_l1(K: np.ndarray, y: np.ndarray, lam: float, cfg: TrainConfig,
                    step0: float, history: Optional[List[float]] = None) -> ColumnResult:
    """
    Proximal gradient (ISTA) for one output neuron with an L1 penalty

    Step 1/L with L = lmax(K)^2 / 4, halved whenever the objective would
    increase; stops once the iterate moves by at most tol.
    """
    P = K.shape[0]
    t = (y + 1.0) / 2.0
    a = np.zeros(P)
    f = np.zeros(P)
    obj = _column_loss(f, y)
    if history is not None:
        history.append(obj)
    step = step0
    moved = np.inf
    for it in range(1, cfg.max_iters + 1):
        g = K @ (expit(f) - t)
        while True:
            a_new = soft_threshold(a - step * g, lam * step)
            f_new = K @ a_new
            obj_new = _column_loss(f_new, y) + lam * float(np.sum(np.abs(a_new)))
            if obj_new <= obj or step <= MIN_STEP:
                break
            step *= 0.5
        moved = float(np.linalg.norm(a_new - a))
        a, f, obj = a_new, f_new, obj_new
        if history is not None:
            history.append(obj)
        if moved <= cfg.tol:
            return ColumnResult(a, it, moved, True)
    return ColumnResult(a, cfg.max_iters, moved, False)


def _assemble(results: List[ColumnResult], regularizer: str, what: str) -> DualWeights:
    alpha = np.column_stack([r.alpha for r in results])
    unconverged = tuple(j for j, r in enumerate(results) if not r.converged)
    report = TrainingReport(
        regularizer=regularizer,
        converged=not unconverged,
        iterations=max(r.iterations for r in results),
        final_norm=max(r.final_norm for r in results),
        unconverged_columns=unconverged,
    )
    if unconverged:
        warnings.warn(
            f"{what}: {len(unconverged)} of {len(results)} columns did not converge "
            f"(final norm {report.final_norm:.3g})",
            ConvergenceWarning,
            stacklevel=3,
        )
    return DualWeights(alpha, report=report)


def klr_train(patterns: PatternSet, ctx: KernelContext, cfg: TrainConfig = TrainConfig(),
              n_jobs: int = 1) -> DualWeights:
    """
    Train dual weights with per-neuron KLR and a kernel-norm (L2) penalty

    Args:
        patterns: Stored patterns (training set and labels)
        ctx: Kernel context built from the same patterns
        cfg: Training configuration with regularizer 'l2'
        n_jobs: Columns trained in parallel (joblib); results do not depend on it

    Returns:
        DualWeights with a TrainingReport attached
    """
    if cfg.regularizer != 'l2':
        raise ValueError(f"klr_train needs regularizer 'l2', got {cfg.regularizer!r}")
    _check_inputs(patterns, ctx)
    lam = training_lambda(cfg, patterns, ctx)
    step0, step_max = _step_bounds(ctx, lam)
    K = ctx.gram
    labels = patterns.data.astype(np.float64)
    results = Parallel(n_jobs=n_jobs)(
        delayed(train_column)(K, labels[:, j], lam, cfg, step0, step_max)
        for j in range(patterns.N)
    )
    return _assemble(results, 'l2', "KLR training")


def lasso_train(patterns: PatternSet, ctx: KernelContext, cfg: TrainConfig,
                n_jobs: int = 1) -> DualWeights:
    """
    Train dual weights with per-neuron logistic loss and an L1 penalty

    Args:
        patterns: Stored patterns
        ctx: Kernel context built from the same patterns
        cfg: Training configuration with regularizer 'l1'
        n_jobs: Columns trained in parallel (joblib)

    Returns:
        DualWeights (typically with many exact zeros)
    """
    if cfg.regularizer != 'l1':
        raise ValueError(f"lasso_train needs regularizer 'l1', got {cfg.regularizer!r}")
    _check_inputs(patterns, ctx)
    lam = training_lambda(cfg, patterns, ctx)
    step0 = 4.0 / ctx.largest_eigenvalue() ** 2
    K = ctx.gram
    labels = patterns.data.astype(np.float64)
    results = Parallel(n_jobs=n_jobs)(
        delayed(train_column_l1)(K, labels[:, j], lam, cfg, step0)
        for j in range(patterns.N)
    )
    return _assemble(results, 'l1', "Lasso training")


def train(patterns: PatternSet, ctx: KernelContext, cfg: TrainConfig, n_jobs: int = 1) -> DualWeights:
    """Dispatch on cfg.regularizer"""
    if cfg.regularizer == 'l1':
        return lasso_train(patterns, ctx, cfg, n_jobs=n_jobs)
    return klr_train(patterns, ctx, cfg, n_jobs=n_jobs)


# ---------- weight snapshots ----------

SNAPSHOT_MAGIC = b'KHMW'
SNAPSHOT_VERSION = 2

REGULARIZER_TAGS = {'l2': 0, 'l1': 1}
COMPRESSION_TAGS = {'none': 0, 'quantize': 1, 'binarize': 2, 'prune': 3}
CENTER_TAGS = {name: i for i, name in enumerate(CENTERS)}
SCALE_TAGS = {name: i for i, name in enumerate(SCALES)}

HEADER_DTYPE = np.dtype([
    ('magic', 'S4'),
    ('version', '<u4'),
    ('P', '<u8'),
    ('N', '<u8'),
    ('gamma', '<f8'),
    ('lam', '<f8'),
    ('regularizer', 'u1'),
    ('compression', 'u1'),
    ('bits', 'u1'),
    ('center', 'u1'),
    ('scale', 'u1'),
    ('pad', 'V3'),
    ('sparsity', '<f8'),
    ('seed', '<u8'),
])


@dataclass(frozen=True)
class SnapshotHeader:
    """Snapshot metadata; ``compression`` is the transform already applied to the weights"""
    gamma: float
    lam: float
    regularizer: str = 'l2'
    seed: int = 0
    compression: CompressionSpec = field(default_factory=CompressionSpec)


def _tag(tags: dict, value: str, what: str) -> int:
    if value not in tags:
        raise ValueError(f"unknown {what} {value!r}")
    return tags[value]


def save_weights(weights: DualWeights, path: str, header: SnapshotHeader) -> str:
    """
    Write a weight snapshot: fixed header then row-major little-endian float64

    Returns:
        The path written
    """
    spec = header.compression
    raw = np.zeros(1, dtype=HEADER_DTYPE)
    raw['magic'] = SNAPSHOT_MAGIC
    raw['version'] = SNAPSHOT_VERSION
    raw['P'] = weights.P
    raw['N'] = weights.N
    raw['gamma'] = header.gamma
    raw['lam'] = header.lam
    raw['regularizer'] = _tag(REGULARIZER_TAGS, header.regularizer, 'regularizer')
    raw['compression'] = _tag(COMPRESSION_TAGS, spec.kind, 'compression')
    raw['bits'] = spec.bits
    raw['center'] = _tag(CENTER_TAGS, spec.center, 'center')
    raw['scale'] = _tag(SCALE_TAGS, spec.scale, 'scale')
    raw['sparsity'] = spec.sparsity
    raw['seed'] = header.seed
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(raw.tobytes())
        f.write(np.ascontiguousarray(weights.alpha, dtype='<f8').tobytes())
    return path


def _untag(tags: dict, code: int, path: str, what: str) -> str:
    names = {v: k for k, v in tags.items()}
    if code not in names:
        raise ValueError(f"{path}: unknown {what} tag {code}")
    return names[code]


def load_weights(path: str) -> Tuple[DualWeights, SnapshotHeader]:
    """Read a snapshot written by save_weights (bit-exact)"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"No weight snapshot at {path}. Run `cli.py train --save-weights` first.")
    with open(path, 'rb') as f:
        blob = f.read()
    if len(blob) < HEADER_DTYPE.itemsize:
        raise ValueError(f"{path}: truncated header")
    raw = np.frombuffer(blob[:HEADER_DTYPE.itemsize], dtype=HEADER_DTYPE)[0]
    if bytes(raw['magic']) != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a weight snapshot (bad magic)")
    if int(raw['version']) != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {int(raw['version'])}")
    P, N = int(raw['P']), int(raw['N'])
    body = blob[HEADER_DTYPE.itemsize:]
    if len(body) != P * N * 8:
        raise ValueError(f"{path}: expected {P * N * 8} payload bytes, found {len(body)}")
    alpha = np.frombuffer(body, dtype='<f8').reshape(P, N).astype(np.float64)
    spec = CompressionSpec(
        kind=_untag(COMPRESSION_TAGS, int(raw['compression']), path, 'compression'),
        bits=int(raw['bits']),
        center=_untag(CENTER_TAGS, int(raw['center']), path, 'center'),
        scale=_untag(SCALE_TAGS, int(raw['scale']), path, 'scale'),
        sparsity=float(raw['sparsity']),
    )
    header = SnapshotHeader(
        gamma=float(raw['gamma']),
        lam=float(raw['lam']),
        regularizer=_untag(REGULARIZER_TAGS, int(raw['regularizer']), path, 'regularizer'),
        seed=int(raw['seed']),
        compression=spec,
    )
    return DualWeights(alpha), header


def main():
    """Train a single desk-scale model on the Ridge and report its metrics"""
    from core import RngSeed, generate_patterns
    from kernel import gram
    from metrics import evaluate

    quiet = is_quiet()
    n, p, gamma = 100, 300, 0.02
    cfg = TrainConfig()
    if not quiet:
        print("=" * 60)
        print("Kernel Hopfield Memory - KLR Training")
        print("=" * 60)
        print(f"N = {n}, P = {p} (load {p / n:.1f}), gamma = {gamma}, lambda = {cfg.resolved_lambda(p)}")

    patterns = generate_patterns(n, p, RngSeed(7).stream(0, 'patterns'))
    ctx = gram(patterns, gamma)
    weights = klr_train(patterns, ctx, cfg)
    report = evaluate(weights, patterns, ctx)

    if not quiet:
        print("\n" + "-" * 60)
        print("Model Performance:")
        print("-" * 60)
        print(f"Bit accuracy:     {report.bit_accuracy:.4f}")
        print(f"Stability margin: {report.stability_margin:.4f}")
        print(f"Converged:        {weights.report.converged} "
              f"({weights.report.iterations} iterations max)")

    path = save_weights(weights, os.path.join('models', 'ridge_weights.khmw'),
                        SnapshotHeader(gamma=gamma, lam=cfg.resolved_lambda(p), seed=7))
    if not quiet:
        print(f"\nSaved weights: {path}")


if __name__ == "__main__":
    main()
