"""
Command-line interface for the kernel Hopfield compression experiments
One subcommand per experiment; writes CSV, JSON manifest and SVG to --out
"""

import argparse
import os
import sys
from dataclasses import fields, replace
from typing import Dict, List, Optional

import pandas as pd
from dotenv import dotenv_values

from compress_weights import CompressionSpec
from experiments import (ExperimentConfig, calibrate_gamma, histogram_frame, influence_frame,
                         lorenz_frame, run_and_save, run_gamma_sweep, run_noise_sweep,
                         run_pruning_sweep, run_quantization_sweep, run_replication_pn2,
                         run_scaling_experiment, run_training, run_walsh_experiment,
                         run_weight_histogram, save_sweep,
                         summarize_results, write_frame)

COMMANDS = ('train', 'quantize-sweep', 'prune-sweep', 'noise-sweep', 'scaling', 'gamma-sweep',
            'walsh', 'replicate-pn2', 'calibrate', 'histogram', 'report')

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(',') if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(',') if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _flag(text: str) -> bool:
    value = text.strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off', ''):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _common_flags() -> argparse.ArgumentParser:
    # defaults stay None so the config file and ExperimentConfig can fill gaps
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument('--config', type=str, help='key = value file pre-populating flags')
    p.add_argument('--out', type=str, help='output directory (default: results)')
    p.add_argument('--n', type=int, help='neuron count N (default 100)')
    p.add_argument('--load', type=float, help='storage load P/N (default 3.0)')
    p.add_argument('--gamma', type=float, help='kernel locality; omitted = calibrate gamma*')
    p.add_argument('--lambda', dest='lam', type=float, help='L2 strength (default 1e-2 * P)')
    p.add_argument('--lambda-l1', type=float, help='L1 strength for the Lasso trainer (default: half of the strength that zeros every weight)')
    p.add_argument('--reg', choices=('l2', 'l1'), help='trainer for train (default l2)')
    p.add_argument('--trials', type=int, help='independent trials (default 10)')
    p.add_argument('--seed', type=int, help='base seed (default 7)')
    p.add_argument('--workers', type=int, help='parallel trials (default 1, -1 = all cores)')
    p.add_argument('--bits', type=_int_list, help='bit depths, e.g. 32,16,8,4,3,2,1')
    p.add_argument('--sparsity', type=_float_list, help='sparsity levels, e.g. 0,0.1,0.2')
    p.add_argument('--noise', type=_float_list, help='noise levels, e.g. 0,0.1,0.2')
    p.add_argument('--gammas', type=_float_list, help='gamma values for gamma-sweep')
    p.add_argument('--candidates', type=_float_list, help='calibration gamma candidates (>= 3)')
    p.add_argument('--binarize-center', choices=('mean', 'median'), help='1-bit center (default mean)')
    p.add_argument('--binarize-scale', choices=('mad', 'rms'), help='1-bit magnitude (default mad)')
    p.add_argument('--max-iters', type=int, help='training iteration cap (default 3000)')
    p.add_argument('--tol', type=float, help='training tolerance (default 1e-5)')
    p.add_argument('--cues', type=int, help='noisy cues per trial and noise level (default 100)')
    p.add_argument('--samples', type=int, help='Walsh samples per target (default 4096)')
    p.add_argument('--targets', type=int, help='Walsh target neurons (default 16)')
    p.add_argument('--bins', type=int, help='histogram bins (default 101)')
    p.add_argument('--regime', choices=('ridge', 'local'), help='scaling regime (default ridge)')
    p.add_argument('--exclude-unconverged', action='store_true', default=None,
                   help='drop trials whose training did not converge')
    p.add_argument('--no-plot', action='store_true', default=None, help='skip SVG output')
    p.add_argument('--save-weights', action='store_true', default=None,
                   help='train: write a weight snapshot to OUT/weights.khmw')
    p.add_argument('--compress-bits', type=int,
                   help='train: also score k-bit weights (1 = binarize) and snapshot them')
    p.add_argument('--compress-sparsity', type=float,
                   help='train: also score magnitude-pruned weights and snapshot them')
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='cli.py',
        description='Kernel Hopfield memory compression experiments',
    )
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True
    common = _common_flags()
    helps = {
        'train': 'train one model and report its metrics',
        'quantize-sweep': 'bit accuracy and margin vs bit depth',
        'prune-sweep': 'bit accuracy and margin vs sparsity',
        'noise-sweep': 'recall accuracy vs noise, full precision vs 2-bit',
        'scaling': 'margin degradation vs Delta^2 with power-law fit',
        'gamma-sweep': '2-bit degradation vs gamma at fixed load',
        'walsh': 'Walsh influence and Gini for L2 vs L1 training',
        'replicate-pn2': 'quantization and pruning sweeps at load 2.0',
        'calibrate': 'select gamma* for the configured N and load',
        'histogram': 'weight histogram and bimodality statistics',
        'report': 'check the qualitative claims against results in --out',
    }
    for command in COMMANDS:
        sub.add_parser(command, parents=[common], help=helps[command])
    return parser


def _config_file_values(path: str) -> Dict:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    actions = {}
    for action in _common_flags()._actions:
        for option in action.option_strings:
            actions[option.lstrip('-').replace('-', '_')] = action
    values = {}
    for key, raw in dotenv_values(path).items():
        name = key.strip().lstrip('-').replace('-', '_').lower()
        if name not in actions or name == 'config':
            raise ValueError(f"{path}: unknown setting {key!r}")
        action = actions[name]
        text = '' if raw is None else raw
        try:
            if action.nargs == 0:
                value = _flag(text)
            elif action.type is not None:
                value = action.type(text)
            else:
                value = text
        except (argparse.ArgumentTypeError, ValueError) as e:
            raise ValueError(f"{path}: bad value for {key!r}: {e}")
        if action.choices and value not in action.choices:
            raise ValueError(f"{path}: {key!r} must be one of {list(action.choices)}, got {value!r}")
        values[action.dest] = value
    return values


def resolve_settings(args: argparse.Namespace) -> Dict:
    """Config file values overlaid by explicit command-line flags"""
    settings = {}
    if args.config:
        settings.update(_config_file_values(args.config))
    settings.update({k: v for k, v in vars(args).items() if v is not None})
    return settings


def build_config(settings: Dict) -> ExperimentConfig:
    names = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in settings.items() if k in names})


def build_compression(settings: Dict, cfg: ExperimentConfig) -> Optional[CompressionSpec]:
    """CompressionSpec from --compress-bits / --compress-sparsity, None when neither is given"""
    bits = settings.get('compress_bits')
    sparsity = settings.get('compress_sparsity')
    if bits is not None and sparsity is not None:
        raise ValueError("--compress-bits and --compress-sparsity are mutually exclusive")
    if bits is not None:
        return CompressionSpec.for_bits(bits, cfg.binarize_center, cfg.binarize_scale)
    if sparsity is not None:
        return CompressionSpec.for_sparsity(sparsity)
    return None


def _plot(name: str, out_dir: str, enabled: bool):
    if not enabled:
        return
    from plots import PLOT_SPECS, render_plot
    spec = PLOT_SPECS.get(name)
    if spec is None:
        return
    path = render_plot(os.path.join(out_dir, f"{name}.csv"), spec, os.path.join(out_dir, f"{name}.svg"))
    print(f"✓ Plot: {path}")


def _save_and_plot(result, out_dir: str, plot: bool):
    for path in save_sweep(result, out_dir):
        print(f"✓ Saved: {path}")
    _plot(result.name, out_dir, plot)


def dispatch(command: str, cfg: ExperimentConfig, out_dir: str, plot: bool,
             snapshot: Optional[str] = None, compression: Optional[CompressionSpec] = None):
    """Run one subcommand with an already validated configuration"""
    if command == 'train':
        run = run_and_save('training', cfg, out_dir,
                           lambda: run_training(cfg, snapshot=snapshot, compression=compression))
        names = ['bit_accuracy', 'stability_margin', 'gamma']
        values = [run.report.bit_accuracy, run.report.stability_margin, run.gamma]
        if run.compressed_report is not None:
            names += ['compressed_bit_accuracy', 'compressed_stability_margin']
            values += [run.compressed_report.bit_accuracy, run.compressed_report.stability_margin]
        frame = pd.DataFrame({'metric_name': names, 'value': values})
        print(f"✓ Saved: {write_frame(frame, os.path.join(out_dir, 'training.csv'))}")
    elif command == 'quantize-sweep':
        _save_and_plot(run_and_save('quantization', cfg, out_dir,
                                    lambda: run_quantization_sweep(cfg)), out_dir, plot)
    elif command == 'prune-sweep':
        _save_and_plot(run_and_save('pruning', cfg, out_dir,
                                    lambda: run_pruning_sweep(cfg)), out_dir, plot)
    elif command == 'noise-sweep':
        _save_and_plot(run_and_save('noise', cfg, out_dir,
                                    lambda: run_noise_sweep(cfg)), out_dir, plot)
    elif command == 'scaling':
        name = f"scaling_{cfg.regime}"
        _save_and_plot(run_and_save(name, cfg, out_dir,
                                    lambda: run_scaling_experiment(cfg)), out_dir, plot)
    elif command == 'gamma-sweep':
        _save_and_plot(run_and_save('gamma_sweep', cfg, out_dir,
                                    lambda: run_gamma_sweep(cfg)), out_dir, plot)
    elif command == 'walsh':
        walsh = run_and_save('walsh', cfg, out_dir, lambda: run_walsh_experiment(cfg))
        _save_and_plot(walsh.result, out_dir, plot)
        for name, frame in (('walsh_gini', walsh.gini_per_trial),
                            ('walsh_influence', influence_frame(walsh)),
                            ('walsh_lorenz', lorenz_frame(walsh))):
            print(f"✓ Saved: {write_frame(frame, os.path.join(out_dir, f'{name}.csv'))}")
    elif command == 'replicate-pn2':
        for result in run_and_save('pn2', cfg, out_dir, lambda: run_replication_pn2(cfg)):
            _save_and_plot(result, out_dir, plot)
    elif command == 'calibrate':
        calibration = run_and_save('calibration', cfg, out_dir,
                                   lambda: calibrate_gamma(cfg, cfg.candidates))
        path = write_frame(calibration.table, os.path.join(out_dir, 'calibration.csv'))
        print(f"✓ Saved: {path}")
        print(f"gamma* = {calibration.gamma_star} ({'passed' if calibration.passed else 'NOT passed'})")
    elif command == 'histogram':
        hist = run_and_save('histogram', cfg, out_dir, lambda: run_weight_histogram(cfg))
        _save_and_plot(hist.result, out_dir, False)
        frame = histogram_frame(hist)
        print(f"✓ Saved: {write_frame(frame, os.path.join(out_dir, 'histogram.csv'))}")
        if plot:
            from plots import render_histogram
            path = render_histogram(frame, hist.pooled, os.path.join(out_dir, 'histogram.svg'))
            print(f"✓ Plot: {path}")
    elif command == 'report':
        for check in summarize_results(out_dir):
            print(f"[{check.status}] {check.claim}: {check.detail}")
    else:
        raise ValueError(f"unknown command {command!r}")


def parse_and_dispatch(argv: List[str]) -> int:
    """
    Parse argv, validate everything, then run the subcommand

    Returns:
        0 on success, 2 for invalid flags or configuration (nothing written),
        1 when the run itself fails
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        settings = resolve_settings(args)
        cfg = build_config(settings)
        compression = build_compression(settings, cfg)
    except (ValueError, FileNotFoundError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = settings.get('out', 'results')
    plot = not settings.get('no_plot', False)
    snapshot = os.path.join(out_dir, 'weights.khmw') if settings.get('save_weights') else None
    if args.command == 'replicate-pn2' and cfg.load != 2.0:
        cfg = replace(cfg, load=2.0)

    try:
        dispatch(args.command, cfg, out_dir, plot, snapshot, compression)
    except (ValueError, FileNotFoundError, RuntimeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
