"""
Seeded multi-trial experiments for kernel Hopfield compression
Quantization, pruning, noise, scaling, gamma and Walsh sweeps with CSV/JSON output
"""

import json
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from analysis import (DEFAULT_BINS, DEFAULT_SAMPLES, DEFAULT_TARGETS, BimodalityStats,
                      InfluenceProfile, PowerLawFit, bimodality_stats, fit_power_law,
                      lorenz_curve, pooled_gini, target_neurons, total_influence,
                      walsh_influence)
from compress_weights import (CENTERS, SCALES, CompressionSpec, apply_compression,
                              prune_threshold, quantization_error_stats, quantize_uniform)
from core import CODE_VERSION, DualWeights, PatternSet, RngSeed, generate_patterns, is_quiet
from kernel import KernelContext, gram
from metrics import MetricsReport, bit_accuracy, evaluate, recall_accuracy, stability_margin
from train_model import L1_FRACTION, SnapshotHeader, TrainConfig, save_weights, train, training_lambda

DEFAULT_BITS = (32, 16, 8, 4, 3, 2, 1)
DEFAULT_SPARSITY = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5)
DEFAULT_NOISE = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
DEFAULT_SCALING_BITS = (16, 12, 10, 8, 7, 6, 5, 4, 3, 2)
DEFAULT_GAMMAS = (0.002, 0.005, 0.01, 0.02, 0.03, 0.05, 0.1)
DEFAULT_CANDIDATES = (0.005, 0.01, 0.02, 0.03, 0.05, 0.1)

LOCAL_GAMMA = 0.1
REPLICATION_LOAD = 2.0
CALIBRATION_TRIALS = 3
NOISE_VARIANT_BITS = 2

# Published pooled Gini for L2 / L1 models (N=100, P/N=3); copied into manifests, never asserted
REFERENCE_GINI = {'l2': 0.305, 'l1': 0.347}

REGIMES = ('ridge', 'local')

SUMMARY_COLUMNS = ['axis_value', 'metric_name', 'mean', 'std', 'trial_count']
RAW_COLUMNS = ['trial', 'axis_value', 'metric_name', 'value']
FLOAT_FORMAT = '%.12g'


def _say(msg: str = ""):
    if not is_quiet():
        print(msg)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Phase-space coordinates, trial budget and sweep axes for one run

    gamma=None means "calibrate first" (see calibrate_gamma). lam=None uses
    the trainer default 1e-2 * P; lambda_l1=None uses half of the L1 strength
    that would zero every weight, resolved per trial.
    """
    n: int = 100
    load: float = 3.0
    gamma: Optional[float] = None
    lam: Optional[float] = None
    lambda_l1: Optional[float] = None
    reg: str = 'l2'
    trials: int = 10
    seed: int = 7
    workers: int = 1
    bits: Tuple[int, ...] = DEFAULT_BITS
    sparsity: Tuple[float, ...] = DEFAULT_SPARSITY
    noise: Tuple[float, ...] = DEFAULT_NOISE
    gammas: Tuple[float, ...] = DEFAULT_GAMMAS
    candidates: Tuple[float, ...] = DEFAULT_CANDIDATES
    binarize_center: str = 'mean'
    binarize_scale: str = 'mad'
    max_iters: int = 3000
    tol: float = 1e-5
    cues: int = 100
    samples: int = DEFAULT_SAMPLES
    targets: int = DEFAULT_TARGETS
    bins: int = DEFAULT_BINS
    regime: str = 'ridge'
    exclude_unconverged: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not self.load > 0:
            raise ValueError(f"load must be > 0, got {self.load}")
        if self.p < 1:
            raise ValueError(f"round(load * n) must be >= 1, got load={self.load}, n={self.n}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.workers == 0 or self.workers < -1:
            raise ValueError(f"workers must be >= 1 (or -1 for all cores), got {self.workers}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.lambda_l1 is not None and self.lambda_l1 < 0:
            raise ValueError(f"lambda_l1 must be >= 0, got {self.lambda_l1}")
        if self.reg not in ('l2', 'l1'):
            raise ValueError(f"reg must be 'l2' or 'l1', got {self.reg!r}")
        if not 0 <= self.seed < (1 << 64):
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.binarize_center not in CENTERS:
            raise ValueError(f"binarize center must be one of {CENTERS}, got {self.binarize_center!r}")
        if self.binarize_scale not in SCALES:
            raise ValueError(f"binarize scale must be one of {SCALES}, got {self.binarize_scale!r}")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.cues < 1:
            raise ValueError(f"cues must be >= 1, got {self.cues}")
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.targets < 1:
            raise ValueError(f"targets must be >= 1, got {self.targets}")
        if self.bins < 10:
            raise ValueError(f"bins must be >= 10, got {self.bins}")
        for k in self.bits:
            if not 1 <= int(k) <= 32 or int(k) != k:
                raise ValueError(f"bit depth must be an integer in [1, 32], got {k}")
        for s in self.sparsity:
            if not 0.0 <= s < 1.0:
                raise ValueError(f"sparsity must be in [0, 1), got {s}")
        for rho in self.noise:
            if not 0.0 <= rho <= 1.0:
                raise ValueError(f"noise level must be in [0, 1], got {rho}")
        for g in tuple(self.gammas) + tuple(self.candidates):
            if not g > 0:
                raise ValueError(f"gamma values must be > 0, got {g}")
        # raises on bad max_iters / tol / lam
        self.train_config()

    @property
    def p(self) -> int:
        return int(np.floor(self.load * self.n + 0.5))

    @property
    def rng_seed(self) -> RngSeed:
        return RngSeed(self.seed)

    def train_config(self, regularizer: Optional[str] = None) -> TrainConfig:
        regularizer = regularizer or self.reg
        lam = self.lambda_l1 if regularizer == 'l1' else self.lam
        return TrainConfig(regularizer=regularizer, lam=lam, max_iters=self.max_iters, tol=self.tol)


@dataclass
class SweepResult:
    """Aggregated (summary) and per-trial (raw) metrics of one sweep plus its manifest"""
    name: str
    axis: str
    summary: pd.DataFrame
    raw: pd.DataFrame
    manifest: Dict = field(default_factory=dict)
    fit: Optional[PowerLawFit] = None

    def means(self, metric: str) -> pd.Series:
        rows = self.summary[self.summary['metric_name'] == metric]
        return pd.Series(rows['mean'].to_numpy(), index=rows['axis_value'].to_numpy(), name=metric)

    def stds(self, metric: str) -> pd.Series:
        rows = self.summary[self.summary['metric_name'] == metric]
        return pd.Series(rows['std'].to_numpy(), index=rows['axis_value'].to_numpy(), name=metric)

    def values(self, metric: str, axis_value: float) -> np.ndarray:
        rows = self.raw[(self.raw['metric_name'] == metric) & (self.raw['axis_value'] == axis_value)]
        return rows['value'].to_numpy()


@dataclass(frozen=True)
class CalibrationResult:
    gamma_star: float
    passed: bool
    table: pd.DataFrame
    # candidate gamma -> number of calibration trials that did not converge
    unconverged: Dict[float, int] = field(default_factory=dict)


@dataclass
class WalshResult:
    result: SweepResult
    gini: Dict[str, float]
    gini_per_trial: pd.DataFrame
    profiles: Dict[str, List[InfluenceProfile]]


@dataclass
class HistogramResult:
    result: SweepResult
    stats: List[BimodalityStats]
    pooled: BimodalityStats
    counts: np.ndarray
    edges: np.ndarray


@dataclass
class TrainingRun:
    patterns: PatternSet
    ctx: KernelContext
    weights: DualWeights
    report: MetricsReport
    gamma: float
    compression: Optional[CompressionSpec] = None
    compressed_report: Optional[MetricsReport] = None


@dataclass
class TrialOutcome:
    trial: int
    rows: List[Tuple[float, str, float]]
    converged: bool = True
    iterations: int = 0
    extras: Dict = field(default_factory=dict)


# ---------- trial mechanics ----------

def _train_trial(cfg: ExperimentConfig, trial: int, gamma: float,
                 regularizer: Optional[str] = None) -> Tuple[PatternSet, KernelContext, DualWeights]:
    patterns = generate_patterns(cfg.n, cfg.p, cfg.rng_seed.stream(trial, 'patterns'))
    ctx = gram(patterns, gamma)
    with warnings.catch_warnings():
        # non-convergence is carried on the TrainingReport and lands in the manifest
        warnings.simplefilter('ignore')
        weights = train(patterns, ctx, cfg.train_config(regularizer))
    return patterns, ctx, weights


def _outcome(trial: int, weights: DualWeights, rows, **extras) -> TrialOutcome:
    report = weights.report
    return TrialOutcome(
        trial=trial,
        rows=rows,
        converged=report.converged if report else True,
        iterations=report.iterations if report else 0,
        extras=extras,
    )


def _run_trials(cfg: ExperimentConfig, fn: Callable, *args) -> List[TrialOutcome]:
    outcomes = Parallel(n_jobs=cfg.workers)(
        delayed(fn)(cfg, trial, *args) for trial in range(cfg.trials)
    )
    return sorted(outcomes, key=lambda o: o.trial)


def summarize(raw: pd.DataFrame) -> pd.DataFrame:
    """Mean, population std and count per (axis_value, metric_name), in first-seen order"""
    if raw.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    grouped = raw.groupby(['axis_value', 'metric_name'], sort=False)['value']
    summary = grouped.agg(['mean', 'count']).reset_index()
    summary['std'] = grouped.std(ddof=0).to_numpy()
    summary = summary.rename(columns={'count': 'trial_count'})
    return summary[SUMMARY_COLUMNS]


def _collect(name: str, axis: str, cfg: ExperimentConfig, outcomes: List[TrialOutcome],
             gamma: float, calibration: Optional[CalibrationResult] = None) -> SweepResult:
    unconverged = [o.trial for o in outcomes if not o.converged]
    excluded = set(unconverged) if cfg.exclude_unconverged else set()
    kept = [o for o in outcomes if o.trial not in excluded]
    records = [(o.trial, float(a), m, float(v)) for o in kept for a, m, v in o.rows]
    raw = pd.DataFrame(records, columns=RAW_COLUMNS)
    manifest = build_manifest(name, cfg, gamma, calibration)
    manifest['trials'] = [
        {'trial': o.trial, 'converged': bool(o.converged), 'iterations': int(o.iterations),
         'excluded': o.trial in excluded, **o.extras}
        for o in outcomes
    ]
    manifest['unconverged_trials'] = unconverged
    if unconverged:
        action = 'excluded' if excluded else 'kept'
        _say(f"✗ {len(unconverged)} of {len(outcomes)} trials did not converge "
             f"({action}): {unconverged}")
    return SweepResult(name, axis, summarize(raw), raw, manifest)


def resolve_gamma(cfg: ExperimentConfig) -> Tuple[float, Optional[CalibrationResult]]:
    """cfg.gamma if set, otherwise the calibrated gamma*"""
    if cfg.gamma is not None:
        return float(cfg.gamma), None
    calibration = calibrate_gamma(cfg, cfg.candidates)
    return calibration.gamma_star, calibration


# ---------- manifests and files ----------

def build_manifest(name: str, cfg: ExperimentConfig, gamma: Optional[float],
                   calibration: Optional[CalibrationResult] = None) -> Dict:
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    return {
        'name': name,
        'code_version': CODE_VERSION,
        'status': 'running',
        'config': config,
        'seed': cfg.seed,
        'patterns': cfg.p,
        'gamma': gamma,
        'gamma_star': calibration.gamma_star if calibration else gamma,
        'gamma_calibrated': calibration is not None,
        'calibration_passed': calibration.passed if calibration else None,
        'lambda': cfg.train_config('l2').resolved_lambda(cfg.p),
        'lambda_l1': cfg.lambda_l1,
        'lambda_l1_fraction': L1_FRACTION if cfg.lambda_l1 is None else None,
        'binarization': {'center': cfg.binarize_center, 'scale': cfg.binarize_scale},
        'influence_sampling': 'uniform',
    }


def write_manifest(manifest: Dict, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}_manifest.json")
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=float)
        f.write('\n')
    return path


def write_frame(df: pd.DataFrame, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def save_sweep(result: SweepResult, out_dir: str) -> Tuple[str, str]:
    """Write <name>.csv (summary) and <name>_raw.csv"""
    summary = write_frame(result.summary, os.path.join(out_dir, f"{result.name}.csv"))
    raw = write_frame(result.raw, os.path.join(out_dir, f"{result.name}_raw.csv"))
    return summary, raw


def read_summary(path: str) -> pd.DataFrame:
    """Load a summary CSV, checking the schema and numeric columns"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"No sweep results at {path}. Run the matching sweep first.")
    df = pd.read_csv(path)
    missing = [c for c in SUMMARY_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    for column in ('axis_value', 'mean', 'std', 'trial_count'):
        values = pd.to_numeric(df[column], errors='coerce')
        bad = values.isna() & df[column].notna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0]) + 2
            raise ValueError(f"{path}: row {row}, column '{column}' is not numeric: {df[column].iloc[row - 2]!r}")
        df[column] = values
    return df


def run_and_save(name: str, cfg: ExperimentConfig, out_dir: str,
                 runner: Callable[[], object]) -> object:
    """
    Run `runner` with the manifest lifecycle: write it first, rewrite it at the end

    The manifest is rewritten with status 'failed' and the error message if
    the runner raises; the exception is then re-raised.

    Returns:
        Whatever the runner returned
    """
    manifest = build_manifest(name, cfg, cfg.gamma)
    write_manifest(manifest, out_dir, name)
    started = time.perf_counter()
    try:
        outcome = runner()
    except Exception as e:
        manifest.update(status='failed', error=str(e),
                        wall_time_s=round(time.perf_counter() - started, 3))
        write_manifest(manifest, out_dir, name)
        raise
    if isinstance(outcome, CalibrationResult):
        manifest.update(gamma_star=outcome.gamma_star, calibration_passed=outcome.passed,
                        gamma_calibrated=True,
                        calibration_unconverged={repr(g): c for g, c in outcome.unconverged.items()})
    if isinstance(outcome, TrainingRun):
        report = outcome.weights.report
        manifest.update(gamma=outcome.gamma, gamma_star=outcome.gamma,
                        bit_accuracy=outcome.report.bit_accuracy,
                        stability_margin=outcome.report.stability_margin,
                        trials=[{'trial': 0,
                                 'converged': bool(report.converged) if report else True,
                                 'iterations': int(report.iterations) if report else 0}])
        if outcome.compressed_report is not None:
            manifest.update(compression=asdict(outcome.compression),
                            compressed_bit_accuracy=outcome.compressed_report.bit_accuracy,
                            compressed_stability_margin=outcome.compressed_report.stability_margin)
    results = outcome if isinstance(outcome, (list, tuple)) else [outcome]
    for item in results:
        sweep = getattr(item, 'result', item)
        if isinstance(sweep, SweepResult):
            manifest.update({k: v for k, v in sweep.manifest.items() if k != 'name'})
            if sweep.fit is not None:
                manifest['fit'] = asdict(sweep.fit)
    manifest.update(status='complete', wall_time_s=round(time.perf_counter() - started, 3))
    write_manifest(manifest, out_dir, name)
    return outcome


# ---------- calibration ----------

def _calibration_trial(cfg: ExperimentConfig, trial: int, candidates: Sequence[float]) -> TrialOutcome:
    rows = []
    converged = {}
    iterations = 0
    for g in candidates:
        patterns, ctx, weights = _train_trial(cfg, trial, g)
        rows.append((g, 'bit_accuracy', bit_accuracy(weights, patterns, ctx)))
        rows.append((g, 'stability_margin', stability_margin(weights, patterns, ctx)))
        rows.append((g, 'converged', float(weights.report.converged)))
        converged[repr(g)] = bool(weights.report.converged)
        iterations = max(iterations, weights.report.iterations)
    return TrialOutcome(trial, rows, all(converged.values()), iterations,
                        {'converged_by_gamma': converged})


def calibrate_gamma(cfg: ExperimentConfig, candidates: Sequence[float] = DEFAULT_CANDIDATES,
                    trials: int = CALIBRATION_TRIALS) -> CalibrationResult:
    """
    Pick gamma* on the Ridge for this N and load

    Among candidates whose bit accuracy is exactly 1.0 in every calibration
    trial, the one with the largest mean stability margin wins. If none
    qualifies the best-accuracy candidate is returned with passed=False.

    Args:
        cfg: Experiment configuration (n, load, lam, seed)
        candidates: At least three positive gamma values
        trials: Calibration budget (capped at cfg.trials)

    Returns:
        CalibrationResult with the per-candidate table
    """
    candidates = [float(g) for g in candidates]
    if len(candidates) < 3:
        raise ValueError(f"calibration needs at least 3 candidate gammas, got {len(candidates)}")
    if any(not g > 0 for g in candidates):
        raise ValueError("candidate gammas must be > 0")
    budget = replace(cfg, trials=max(1, min(trials, cfg.trials)), reg='l2')
    _say(f"Calibrating gamma over {candidates} ({budget.trials} trials)...")
    outcomes = _run_trials(budget, _calibration_trial, candidates)
    raw = pd.DataFrame([(o.trial, a, m, v) for o in outcomes for a, m, v in o.rows],
                       columns=RAW_COLUMNS)
    table = summarize(raw)

    accuracy = raw[raw['metric_name'] == 'bit_accuracy'].groupby('axis_value', sort=False)['value']
    margin = raw[raw['metric_name'] == 'stability_margin'].groupby('axis_value', sort=False)['value'].mean()
    perfect = [g for g in candidates if bool((accuracy.get_group(g) == 1.0).all())]
    if perfect:
        gamma_star = max(perfect, key=lambda g: (margin[g], -candidates.index(g)))
        passed = True
    else:
        mean_acc = accuracy.mean()
        gamma_star = max(candidates, key=lambda g: (mean_acc[g], -candidates.index(g)))
        passed = False
        warnings.warn(
            f"no candidate gamma reached bit accuracy 1.0; using best-accuracy gamma {gamma_star}",
            RuntimeWarning,
            stacklevel=2,
        )
    _say(f"{'✓' if passed else '✗'} gamma* = {gamma_star}")
    flags = raw[raw['metric_name'] == 'converged'].groupby('axis_value', sort=False)['value']
    unconverged = {float(g): int((flags.get_group(g) == 0.0).sum()) for g in candidates}
    for g, count in unconverged.items():
        if count:
            _say(f"✗ gamma {g}: {count} of {budget.trials} calibration trials did not converge")
    return CalibrationResult(gamma_star, passed, table, unconverged)


# ---------- compression sweeps ----------

def _compression_trial(cfg: ExperimentConfig, trial: int, gamma: float,
                       specs: Sequence[CompressionSpec]) -> TrialOutcome:
    patterns, ctx, weights = _train_trial(cfg, trial, gamma)
    rows = []
    for spec in specs:
        compressed = apply_compression(weights, spec)
        report = evaluate(compressed, patterns, ctx)
        rows.append((spec.parameter, 'bit_accuracy', report.bit_accuracy))
        rows.append((spec.parameter, 'stability_margin', report.stability_margin))
        if spec.kind == 'prune':
            rows.append((spec.parameter, 'prune_threshold', prune_threshold(weights, spec.sparsity)))
    stats = bimodality_stats(weights, cfg.bins)
    return _outcome(trial, weights, rows,
                    baseline_accuracy=bit_accuracy(weights, patterns, ctx),
                    central_mass=stats.central_mass, bimodal=stats.bimodal,
                    mode_low=stats.mode_low, mode_high=stats.mode_high)


def _sweep(name: str, axis: str, cfg: ExperimentConfig, specs: Sequence[CompressionSpec],
           calibration: Optional[CalibrationResult] = None) -> SweepResult:
    if calibration is None:
        gamma, calibration = resolve_gamma(cfg)
    else:
        gamma = calibration.gamma_star
    _say("=" * 60)
    _say(f"{name}: N={cfg.n}, P={cfg.p}, gamma={gamma}, {cfg.trials} trials")
    _say("=" * 60)
    outcomes = _run_trials(cfg, _compression_trial, gamma, specs)
    result = _collect(name, axis, cfg, outcomes, gamma, calibration)
    _say(f"✓ {len(outcomes)} trials complete")
    return result


def run_quantization_sweep(cfg: ExperimentConfig, name: str = 'quantization',
                           calibration: Optional[CalibrationResult] = None) -> SweepResult:
    """
    Bit accuracy and stability margin against bit depth

    Each trial trains once; every bit depth compresses the same weights
    (k = 1 binarizes with the configured center and scale rule). A given
    calibration supplies gamma* and is recorded in the manifest.
    """
    specs = [CompressionSpec.for_bits(int(k), cfg.binarize_center, cfg.binarize_scale)
             for k in cfg.bits]
    return _sweep(name, 'bits', cfg, specs, calibration)


def run_pruning_sweep(cfg: ExperimentConfig, name: str = 'pruning',
                      calibration: Optional[CalibrationResult] = None) -> SweepResult:
    """Bit accuracy, stability margin and magnitude threshold against pruning sparsity"""
    specs = [CompressionSpec.for_sparsity(s) for s in cfg.sparsity]
    return _sweep(name, 'sparsity', cfg, specs, calibration)


def _noise_trial(cfg: ExperimentConfig, trial: int, gamma: float) -> TrialOutcome:
    patterns, ctx, weights = _train_trial(cfg, trial, gamma)
    variants = {
        'recall_full': weights,
        f'recall_{NOISE_VARIANT_BITS}bit': quantize_uniform(weights, NOISE_VARIANT_BITS)[0],
    }
    rows = []
    for rho in cfg.noise:
        for metric, variant in variants.items():
            # both variants see the same noisy cues
            rng = cfg.rng_seed.stream(trial, f'noise:{rho!r}')
            mean, _ = recall_accuracy(variant, patterns, ctx, rho, cfg.cues, rng)
            rows.append((float(rho), metric, mean))
    return _outcome(trial, weights, rows)


def run_noise_sweep(cfg: ExperimentConfig, name: str = 'noise') -> SweepResult:
    """Bit-wise recall accuracy against noise level, full precision vs 2-bit"""
    gamma, calibration = resolve_gamma(cfg)
    _say("=" * 60)
    _say(f"{name}: noise levels {list(cfg.noise)}, {cfg.cues} cues per level")
    _say("=" * 60)
    outcomes = _run_trials(cfg, _noise_trial, gamma)
    result = _collect(name, 'noise', cfg, outcomes, gamma, calibration)
    _say(f"✓ {len(outcomes)} trials complete")
    return result


# ---------- scaling ----------

def _scaling_trial(cfg: ExperimentConfig, trial: int, gamma: float,
                   bits: Sequence[int]) -> TrialOutcome:
    patterns, ctx, weights = _train_trial(cfg, trial, gamma)
    baseline = stability_margin(weights, patterns, ctx)
    rows = []
    for k in bits:
        quantized, delta = quantize_uniform(weights, int(k))
        drop = baseline - stability_margin(quantized, patterns, ctx)
        err = quantization_error_stats(weights, int(k))
        rows += [
            (float(k), 'delta_squared', delta ** 2),
            (float(k), 'margin_degradation', drop),
            (float(k), 'relative_degradation', drop / baseline if baseline != 0 else float('nan')),
            (float(k), 'quant_mse', err.mse),
            (float(k), 'quant_mse_predicted', err.predicted),
            (float(k), 'quant_mse_ratio', err.ratio),
        ]
    return _outcome(trial, weights, rows, baseline_margin=baseline)


def run_scaling_experiment(cfg: ExperimentConfig, regime: Optional[str] = None,
                           bits: Sequence[int] = DEFAULT_SCALING_BITS) -> SweepResult:
    """
    Margin degradation against the squared quantization step

    Args:
        cfg: Experiment configuration
        regime: 'ridge' (gamma*, with a power-law fit) or 'local' (gamma = 0.1);
            defaults to cfg.regime
        bits: Bit depths, each >= 2

    Returns:
        SweepResult; ``fit`` holds the PowerLawFit on the ridge (possibly
        unavailable), None for the local regime
    """
    regime = regime or cfg.regime
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    if any(int(k) < 2 for k in bits):
        raise ValueError("scaling bit depths must be >= 2")
    if regime == 'local':
        gamma, calibration = LOCAL_GAMMA, None
    else:
        gamma, calibration = resolve_gamma(cfg)
    name = f"scaling_{regime}"
    _say("=" * 60)
    _say(f"{name}: gamma={gamma}, bits {list(bits)}")
    _say("=" * 60)
    outcomes = _run_trials(cfg, _scaling_trial, gamma, bits)
    result = _collect(name, 'bits', cfg, outcomes, gamma, calibration)
    result.manifest['regime'] = regime
    if regime == 'ridge':
        x = result.means('delta_squared')
        y = result.means('margin_degradation')
        result.fit = fit_power_law(x.to_numpy(), y.reindex(x.index).to_numpy())
        result.manifest['fit'] = asdict(result.fit)
        if result.fit.available:
            _say(f"✓ beta = {result.fit.slope:.3f} (R^2 = {result.fit.r_squared:.3f}, "
                 f"{result.fit.points_used} points)")
        else:
            _say(f"✗ power-law fit unavailable ({result.fit.points_used} positive points)")
    return result


# ---------- gamma sweep ----------

def _gamma_trial(cfg: ExperimentConfig, trial: int, gammas: Sequence[float]) -> TrialOutcome:
    rows = []
    last = None
    converged = True
    for g in gammas:
        patterns, ctx, weights = _train_trial(cfg, trial, g)
        base = bit_accuracy(weights, patterns, ctx)
        quantized = bit_accuracy(quantize_uniform(weights, NOISE_VARIANT_BITS)[0], patterns, ctx)
        rows += [
            (g, 'baseline_accuracy', base),
            (g, 'quantized_accuracy', quantized),
            (g, 'accuracy_degradation', base - quantized),
        ]
        converged = converged and (weights.report is None or weights.report.converged)
        last = weights
    outcome = _outcome(trial, last, rows)
    outcome.converged = converged
    return outcome


def run_gamma_sweep(cfg: ExperimentConfig, gammas: Optional[Sequence[float]] = None) -> SweepResult:
    """2-bit accuracy degradation and full-precision accuracy against gamma at fixed load"""
    gammas = [float(g) for g in (gammas if gammas is not None else cfg.gammas)]
    if not gammas or any(not g > 0 for g in gammas):
        raise ValueError("gamma sweep needs positive gamma values")
    gamma_star, calibration = resolve_gamma(cfg)
    _say("=" * 60)
    _say(f"gamma_sweep: {gammas} at load {cfg.load} (gamma* = {gamma_star})")
    _say("=" * 60)
    outcomes = _run_trials(cfg, _gamma_trial, gammas)
    result = _collect('gamma_sweep', 'gamma', cfg, outcomes, gamma_star, calibration)
    _say(f"✓ {len(outcomes)} trials complete")
    return result


# ---------- Walsh influence ----------

def _safe_gini(profiles: List[InfluenceProfile]) -> float:
    # a fully pruned L1 model has no influence at all
    try:
        return pooled_gini(profiles)
    except ValueError:
        return float('nan')


def _walsh_trial(cfg: ExperimentConfig, trial: int, gamma: float) -> TrialOutcome:
    patterns = generate_patterns(cfg.n, cfg.p, cfg.rng_seed.stream(trial, 'patterns'))
    ctx = gram(patterns, gamma)
    targets = target_neurons(cfg.n, cfg.targets)
    rows = []
    extras = {}
    profiles = {}
    converged = True
    iterations = 0
    for reg in ('l2', 'l1'):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            weights = train(patterns, ctx, cfg.train_config(reg))
        converged = converged and weights.report.converged
        iterations = max(iterations, weights.report.iterations)
        profiles[reg] = [
            walsh_influence(weights, patterns, ctx, int(j), cfg.samples,
                            cfg.rng_seed.stream(trial, f'walsh:{j}'))
            for j in targets
        ]
        for profile in profiles[reg]:
            rows.append((float(profile.target), f'cross_influence_{reg}', total_influence(profile)))
        extras[f'gini_{reg}'] = _safe_gini(profiles[reg])
        extras[f'zero_weights_{reg}'] = float(np.mean(weights.alpha == 0.0))
    extras['lambda_l1'] = training_lambda(cfg.train_config('l1'), patterns, ctx)
    outcome = TrialOutcome(trial, rows, converged, iterations, extras)
    outcome.extras['profiles'] = {
        reg: [p.influence.tolist() for p in ps] for reg, ps in profiles.items()
    }
    return outcome


def run_walsh_experiment(cfg: ExperimentConfig) -> WalshResult:
    """
    Cross-influence profiles and pooled Gini for L2- and L1-trained models

    Both models are trained on the same patterns per trial and measured with
    the same uniform base states per target neuron.

    Returns:
        WalshResult with per-target totals, Gini per regularizer (mean over
        trials) and the trial-0 profiles
    """
    gamma, calibration = resolve_gamma(cfg)
    targets = target_neurons(cfg.n, cfg.targets)
    _say("=" * 60)
    l1 = cfg.lambda_l1 if cfg.lambda_l1 is not None else f"{L1_FRACTION} * lambda_max"
    _say(f"walsh: targets {targets.tolist()}, m = {cfg.samples}, lambda_l1 = {l1}")
    _say("=" * 60)
    outcomes = _run_trials(cfg, _walsh_trial, gamma)
    stored = {o.trial: o.extras.pop('profiles') for o in outcomes}
    result = _collect('walsh', 'target', cfg, outcomes, gamma, calibration)

    per_trial = pd.DataFrame({
        'trial': [o.trial for o in outcomes],
        'gini_l2': [o.extras['gini_l2'] for o in outcomes],
        'gini_l1': [o.extras['gini_l1'] for o in outcomes],
    })
    gini = {'l2': float(per_trial['gini_l2'].mean()), 'l1': float(per_trial['gini_l1'].mean())}
    first = outcomes[0].trial
    profiles = {
        reg: [InfluenceProfile(int(j), np.asarray(v), cfg.samples, True)
              for j, v in zip(targets, stored[first][reg])]
        for reg in ('l2', 'l1')
    }
    result.manifest['gini'] = gini
    result.manifest['reference_gini'] = dict(REFERENCE_GINI)
    result.manifest['targets'] = targets.tolist()
    _say(f"Gini L2 = {gini['l2']:.3f} (reference {REFERENCE_GINI['l2']})")
    _say(f"Gini L1 = {gini['l1']:.3f} (reference {REFERENCE_GINI['l1']})")
    _say(f"{'✓' if gini['l1'] > gini['l2'] else '✗'} L1 concentrates influence more than L2")
    return WalshResult(result, gini, per_trial, profiles)


def influence_frame(walsh: WalshResult) -> pd.DataFrame:
    """Long table regularizer,target,input,influence of the stored profiles"""
    records = [
        (reg, p.target, i, float(v))
        for reg, profiles in walsh.profiles.items()
        for p in profiles
        for i, v in enumerate(p.influence)
    ]
    return pd.DataFrame(records, columns=['regularizer', 'target', 'input', 'influence'])


def lorenz_frame(walsh: WalshResult) -> pd.DataFrame:
    """Lorenz curves of the pooled cross-influences, one column per regularizer"""
    curves = {
        reg: lorenz_curve(np.concatenate([p.summary_values() for p in profiles]))
        for reg, profiles in walsh.profiles.items()
    }
    size = len(next(iter(curves.values())))
    return pd.DataFrame({'population_share': np.linspace(0.0, 1.0, size), **curves})


# ---------- replication and histogram ----------

def run_replication_pn2(cfg: ExperimentConfig) -> Tuple[SweepResult, SweepResult]:
    """Quantization and pruning sweeps at load 2.0 (gamma recalibrated unless fixed)"""
    low = replace(cfg, load=REPLICATION_LOAD)
    calibration = None
    if low.gamma is None:
        calibration = calibrate_gamma(low, low.candidates)
    return (run_quantization_sweep(low, name='pn2_quantization', calibration=calibration),
            run_pruning_sweep(low, name='pn2_pruning', calibration=calibration))


def _histogram_trial(cfg: ExperimentConfig, trial: int, gamma: float) -> TrialOutcome:
    _, _, weights = _train_trial(cfg, trial, gamma)
    stats = bimodality_stats(weights, cfg.bins)
    rows = [
        (cfg.load, 'central_mass', stats.central_mass),
        (cfg.load, 'valley_depth', stats.valley_depth),
        (cfg.load, 'mode_low', stats.mode_low),
        (cfg.load, 'mode_high', stats.mode_high),
        (cfg.load, 'bimodal', float(stats.bimodal)),
    ]
    outcome = _outcome(trial, weights, rows)
    outcome.extras['weights'] = weights.alpha
    outcome.extras['stats'] = stats
    return outcome


def run_weight_histogram(cfg: ExperimentConfig) -> HistogramResult:
    """Bimodality statistics per trial and the histogram of all trials' weights pooled"""
    gamma, calibration = resolve_gamma(cfg)
    _say("=" * 60)
    _say(f"histogram: load {cfg.load}, gamma {gamma}, {cfg.bins} bins")
    _say("=" * 60)
    outcomes = _run_trials(cfg, _histogram_trial, gamma)
    pooled = np.concatenate([o.extras.pop('weights').ravel() for o in outcomes])
    stats = [o.extras.pop('stats') for o in outcomes]
    counts, edges = np.histogram(pooled, bins=cfg.bins, range=(float(pooled.min()), float(pooled.max())))
    result = _collect('bimodality', 'load', cfg, outcomes, gamma, calibration)
    pooled_stats = bimodality_stats(pooled, cfg.bins)
    result.manifest['pooled_bimodality'] = asdict(pooled_stats)
    _say(f"central mass {pooled_stats.central_mass:.4f}, modes "
         f"{pooled_stats.mode_low:.3f} / {pooled_stats.mode_high:.3f}")
    return HistogramResult(result, stats, pooled_stats, counts, edges)


def histogram_frame(hist: HistogramResult) -> pd.DataFrame:
    return pd.DataFrame({
        'bin_left': hist.edges[:-1],
        'bin_right': hist.edges[1:],
        'count': hist.counts,
    })


def run_training(cfg: ExperimentConfig, snapshot: Optional[str] = None,
                 compression: Optional[CompressionSpec] = None) -> TrainingRun:
    """
    Train one model (trial 0) and score it

    Args:
        cfg: Experiment configuration; reg picks the trainer
        snapshot: Optional path for a weight snapshot
        compression: Optional transform; it is scored too, and the snapshot
            then holds the compressed weights with the transform in its header

    Returns:
        TrainingRun
    """
    gamma, _ = resolve_gamma(cfg)
    patterns, ctx, weights = _train_trial(cfg, 0, gamma)
    report = evaluate(weights, patterns, ctx)
    _say(f"Bit accuracy:     {report.bit_accuracy:.4f}")
    _say(f"Stability margin: {report.stability_margin:.4f}")
    if weights.report is not None and not weights.report.converged:
        _say(f"✗ {len(weights.report.unconverged_columns)} columns did not converge")
    stored, compressed_report = weights, None
    if compression is not None and compression.kind != 'none':
        stored = apply_compression(weights, compression)
        compressed_report = evaluate(stored, patterns, ctx)
        _say(f"{compression.kind} ({compression.parameter:g}): bit accuracy "
             f"{compressed_report.bit_accuracy:.4f}, margin {compressed_report.stability_margin:.4f}")
    if snapshot:
        header = SnapshotHeader(gamma=gamma, lam=training_lambda(cfg.train_config(), patterns, ctx),
                                regularizer=cfg.reg, seed=cfg.seed,
                                compression=compression or CompressionSpec())
        save_weights(stored, snapshot, header)
        _say(f"Saved weights: {snapshot}")
    return TrainingRun(patterns, ctx, weights, report, gamma, compression, compressed_report)


# ---------- report ----------

@dataclass(frozen=True)
class ClaimCheck:
    claim: str
    status: str
    detail: str


def _load_optional(out_dir: str, name: str) -> Optional[pd.DataFrame]:
    path = os.path.join(out_dir, f"{name}.csv")
    return read_summary(path) if os.path.exists(path) else None


def _load_manifest(out_dir: str, name: str) -> Optional[Dict]:
    path = os.path.join(out_dir, f"{name}_manifest.json")
    if not os.path.exists(path):
        return None
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def _mean_at(df: pd.DataFrame, metric: str, axis_value: float) -> Optional[float]:
    rows = df[(df['metric_name'] == metric) & np.isclose(df['axis_value'], axis_value)]
    if rows.empty:
        return None
    return float(rows['mean'].iloc[0])


def _check(claim: str, ok: bool, detail: str) -> ClaimCheck:
    return ClaimCheck(claim, 'PASS' if ok else 'FAIL', detail)


def _missing(claim: str, what: str) -> ClaimCheck:
    return ClaimCheck(claim, 'SKIP', f"no {what} in the sweep")


def _quantization_claims(df: pd.DataFrame, prefix: str) -> List[ClaimCheck]:
    checks = []
    for k, floor in ((2, 0.99), (1, 0.95)):
        claim = f"{prefix}{k}-bit accuracy >= {floor}"
        acc = _mean_at(df, 'bit_accuracy', k)
        checks.append(_missing(claim, f"k={k} row") if acc is None
                      else _check(claim, acc >= floor, f"{acc:.4f}"))
    claim = f"{prefix}margin(k=2) > margin(k=8)"
    m2 = _mean_at(df, 'stability_margin', 2)
    m8 = _mean_at(df, 'stability_margin', 8)
    if m2 is None or m8 is None:
        checks.append(_missing(claim, "k=2 and k=8 rows"))
    else:
        checks.append(_check(claim, m2 > m8, f"{m2:.4f} vs {m8:.4f}"))
    return checks


def _pruning_claims(df: pd.DataFrame, prefix: str) -> List[ClaimCheck]:
    checks = []
    claim = f"{prefix}10% pruning drops accuracy by >= 0.01"
    a0 = _mean_at(df, 'bit_accuracy', 0.0)
    a1 = _mean_at(df, 'bit_accuracy', 0.1)
    if a0 is None or a1 is None:
        checks.append(_missing(claim, "S=0 and S=0.1 rows"))
    else:
        checks.append(_check(claim, a0 - a1 >= 0.01, f"{a0:.4f} -> {a1:.4f}"))
    claim = f"{prefix}accuracy non-increasing in sparsity"
    means = df[df['metric_name'] == 'bit_accuracy'].sort_values('axis_value')['mean'].to_numpy()
    if means.size == 0:
        checks.append(_missing(claim, "bit_accuracy rows"))
    else:
        checks.append(_check(claim, bool(np.all(np.diff(means) <= 1e-9)),
                             ", ".join(f"{v:.4f}" for v in means)))
    return checks


def _trained_weight_claims(manifest: Optional[Dict], prefix: str) -> List[ClaimCheck]:
    """Baseline accuracy and bimodality from the per-trial records of a compression sweep"""
    base = f"{prefix}baseline accuracy exactly 1.0 in >= 90% of trials"
    split = f"{prefix}weights bimodal with central mass < 0.05"
    trials = [t for t in (manifest or {}).get('trials', [])
              if not t.get('excluded') and 'baseline_accuracy' in t]
    if not trials:
        return [ClaimCheck(c, 'SKIP', "no compression sweep manifest") for c in (base, split)]
    perfect = sum(t['baseline_accuracy'] == 1.0 for t in trials)
    mass = float(np.mean([t['central_mass'] for t in trials]))
    opposite = sum(bool(t['bimodal']) and t['mode_low'] < 0 < t['mode_high'] for t in trials)
    return [
        _check(base, 10 * perfect >= 9 * len(trials), f"{perfect}/{len(trials)} trials"),
        _check(split, mass < 0.05 and opposite == len(trials),
               f"central mass {mass:.4f}, opposite-sign modes in {opposite}/{len(trials)} trials"),
    ]


def _first_manifest(out_dir: str, names: Sequence[str]) -> Optional[Dict]:
    for name in names:
        manifest = _load_manifest(out_dir, name)
        if manifest is not None:
            return manifest
    return None


def summarize_results(out_dir: str) -> List[ClaimCheck]:
    """
    Check each qualitative claim against the sweep outputs in out_dir

    Writes report.txt with one PASS/FAIL/SKIP line per claim. Missing sweeps
    are skipped, malformed ones raise ValueError.

    Returns:
        The ClaimCheck list
    """
    if not os.path.isdir(out_dir):
        raise FileNotFoundError(f"No results directory {out_dir}. Run a sweep first.")
    checks: List[ClaimCheck] = []

    def skip(claim: str, name: str):
        checks.append(ClaimCheck(claim, 'SKIP', f"{name}.csv not found"))

    for name, prefix in (('quantization', ''), ('pn2_quantization', 'P/N=2: ')):
        df = _load_optional(out_dir, name)
        if df is None:
            skip(f"{prefix}quantization robustness", name)
        else:
            checks += _quantization_claims(df, prefix)
    for name, prefix in (('pruning', ''), ('pn2_pruning', 'P/N=2: ')):
        df = _load_optional(out_dir, name)
        if df is None:
            skip(f"{prefix}pruning fragility", name)
        else:
            checks += _pruning_claims(df, prefix)
    for names, prefix in ((('quantization', 'pruning'), ''),
                          (('pn2', 'pn2_quantization', 'pn2_pruning'), 'P/N=2: ')):
        checks += _trained_weight_claims(_first_manifest(out_dir, names), prefix)

    df = _load_optional(out_dir, 'noise')
    if df is None:
        skip("noise robustness", 'noise')
    else:
        full = _mean_at(df, 'recall_full', 0.2)
        low = _mean_at(df, f'recall_{NOISE_VARIANT_BITS}bit', 0.2)
        if full is None or low is None:
            checks.append(_missing("noise robustness", "rho=0.2 rows"))
        else:
            checks.append(_check("recall at 20% noise > 0.85 (both)", min(full, low) > 0.85,
                                 f"{full:.4f} / {low:.4f}"))
            checks.append(_check("2-bit recall within 0.05 of full precision",
                                 abs(full - low) <= 0.05, f"gap {abs(full - low):.4f}"))

    manifest = _load_manifest(out_dir, 'scaling_ridge')
    if manifest is None or 'fit' not in manifest:
        checks.append(ClaimCheck("power-law scaling on the Ridge", 'SKIP', "no fitted scaling run"))
    else:
        fit = manifest['fit']
        ok = bool(fit['available']) and 0.5 <= fit['slope'] <= 1.2 and fit['r_squared'] >= 0.8
        checks.append(_check("beta in [0.5, 1.2] with R^2 >= 0.8", ok,
                             f"beta {fit['slope']}, R^2 {fit['r_squared']}, {fit['points_used']} pts"))

    df = _load_optional(out_dir, 'scaling_local')
    if df is None:
        skip("local regime degradation ~ 0", 'scaling_local')
    else:
        rel = df[df['metric_name'] == 'relative_degradation']['mean'].abs()
        checks.append(_check("local regime |degradation| <= 5% of baseline", bool((rel <= 0.05).all()),
                             f"max {rel.max():.4f}"))

    df = _load_optional(out_dir, 'gamma_sweep')
    manifest = _load_manifest(out_dir, 'gamma_sweep')
    if df is None or manifest is None or manifest.get('gamma_star') is None:
        skip("gamma sweep valley", 'gamma_sweep')
    else:
        g_star = float(manifest['gamma_star'])
        deg = df[df['metric_name'] == 'accuracy_degradation']
        above = deg[deg['axis_value'] > g_star]['mean']
        below = deg[deg['axis_value'] < g_star]['mean']
        checks.append(_check("no 2-bit degradation above gamma*", bool((above <= 0.01).all()),
                             f"max {above.max() if len(above) else float('nan'):.4f}"))
        checks.append(_check("degradation peak > 0.10 below gamma*",
                             bool(len(below)) and float(below.max()) > 0.10,
                             f"peak {below.max() if len(below) else float('nan'):.4f}"))

    gini_path = os.path.join(out_dir, 'walsh_gini.csv')
    if not os.path.exists(gini_path):
        checks.append(ClaimCheck("L1 Gini exceeds L2 Gini", 'SKIP', "walsh_gini.csv not found"))
    else:
        g = pd.read_csv(gini_path)
        g2, g1 = float(g['gini_l2'].mean()), float(g['gini_l1'].mean())
        checks.append(_check("L1 Gini exceeds L2 Gini", 0 < g2 < g1 < 1, f"{g1:.4f} vs {g2:.4f}"))

    path = os.path.join(out_dir, 'report.txt')
    with open(path, 'w', encoding='utf-8') as f:
        for c in checks:
            f.write(f"[{c.status}] {c.claim}: {c.detail}\n")
    _say(f"Wrote {path}")
    return checks


def main():
    """Run the quantization and pruning sweeps at desk scale"""
    cfg = ExperimentConfig(trials=3)
    out_dir = 'results'
    gamma, _ = resolve_gamma(cfg)
    cfg = replace(cfg, gamma=gamma)
    for name, runner in (('quantization', run_quantization_sweep), ('pruning', run_pruning_sweep)):
        result = run_and_save(name, cfg, out_dir, lambda r=runner: r(cfg))
        for path in save_sweep(result, out_dir):
            _say(f"✓ Wrote {path}")


if __name__ == "__main__":
    main()
