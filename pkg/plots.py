"""
Figures for sweep results
Renders summary CSVs to self-contained SVG line plots with +/- 1 std bands
"""

import os
from dataclasses import dataclass
from typing import Optional, Tuple

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from analysis import BimodalityStats, PowerLawFit, fit_power_law, optional_fit_label
from experiments import read_summary

# Fixed salt and no date so identical inputs give identical SVG bytes
SVG_HASHSALT = 'khm'


@dataclass(frozen=True)
class PlotSpec:
    title: str
    x_label: str
    y_label: str
    metrics: Tuple[str, ...]
    x_metric: Optional[str] = None
    log_log: bool = False
    fit: bool = False


PLOT_SPECS = {
    'quantization': PlotSpec('Quantization sweep', 'bit depth k', 'metric',
                             ('bit_accuracy', 'stability_margin')),
    'pruning': PlotSpec('Pruning sweep', 'sparsity S', 'metric',
                        ('bit_accuracy', 'stability_margin')),
    'noise': PlotSpec('Recall under input noise', 'noise level rho', 'bit-wise recall accuracy',
                      ('recall_full', 'recall_2bit')),
    'scaling_ridge': PlotSpec('Quantization scaling (Ridge)', 'Delta^2', 'margin degradation',
                              ('margin_degradation',), x_metric='delta_squared', log_log=True, fit=True),
    'scaling_local': PlotSpec('Quantization scaling (local regime)', 'bit depth k',
                              'margin degradation', ('margin_degradation',)),
    'gamma_sweep': PlotSpec('2-bit degradation vs kernel locality', 'gamma', 'accuracy',
                            ('accuracy_degradation', 'baseline_accuracy')),
    'walsh': PlotSpec('Total cross-influence per target', 'target neuron', 'sum of influences',
                      ('cross_influence_l2', 'cross_influence_l1')),
    'pn2_quantization': PlotSpec('Quantization sweep (P/N = 2)', 'bit depth k', 'metric',
                                 ('bit_accuracy', 'stability_margin')),
    'pn2_pruning': PlotSpec('Pruning sweep (P/N = 2)', 'sparsity S', 'metric',
                            ('bit_accuracy', 'stability_margin')),
}


def _style():
    sns.set_theme(style='whitegrid')
    plt.rcParams['svg.hashsalt'] = SVG_HASHSALT
    plt.rcParams['svg.fonttype'] = 'path'


def _save(fig, out_path: str) -> str:
    directory = os.path.dirname(out_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return out_path


def _series(df: pd.DataFrame, metric: str, x_metric: Optional[str]):
    rows = df[df['metric_name'] == metric]
    y = rows['mean'].to_numpy(dtype=float)
    err = rows['std'].to_numpy(dtype=float)
    if x_metric is None:
        x = rows['axis_value'].to_numpy(dtype=float)
    else:
        xs = df[df['metric_name'] == x_metric].set_index('axis_value')['mean']
        x = xs.reindex(rows['axis_value']).to_numpy(dtype=float)
    order = np.argsort(x, kind='stable')
    return x[order], y[order], err[order]


def render_plot(csv_path: str, spec: PlotSpec, out_path: str) -> str:
    """
    Render a sweep summary CSV to SVG

    Args:
        csv_path: Summary CSV (axis_value,metric_name,mean,std,trial_count)
        spec: Which metrics to draw and how
        out_path: SVG destination

    Returns:
        out_path

    Raises:
        ValueError: malformed or empty data (nothing is written)
    """
    df = read_summary(csv_path)
    if df.empty:
        raise ValueError(f"{csv_path}: no data rows to plot")
    missing = [m for m in spec.metrics + ((spec.x_metric,) if spec.x_metric else ())
               if not (df['metric_name'] == m).any()]
    if missing:
        raise ValueError(f"{csv_path}: no rows for metric(s) {', '.join(missing)}")

    _style()
    fig, ax = plt.subplots(figsize=(8, 5))
    fit: Optional[PowerLawFit] = None
    for metric in spec.metrics:
        x, y, err = _series(df, metric, spec.x_metric)
        if spec.log_log:
            keep = (x > 0) & (y > 0)
            if not keep.any():
                plt.close(fig)
                raise ValueError(f"{csv_path}: no positive points for a log-log plot of {metric}")
            fit = fit_power_law(x, y) if spec.fit else None
            x, y, err = x[keep], y[keep], err[keep]
            lower = np.maximum(y - err, y * 1e-3)
        else:
            lower = y - err
        line, = ax.plot(x, y, marker='o', label=metric)
        ax.fill_between(x, lower, y + err, color=line.get_color(), alpha=0.2)

    if spec.log_log:
        ax.set_xscale('log')
        ax.set_yscale('log')
        if fit is not None and fit.available:
            grid = np.geomspace(x.min(), x.max(), 50)
            ax.plot(grid, fit.predict(grid), 'k--', lw=1.5, label=optional_fit_label(fit))
    ax.set_xlabel(spec.x_label)
    ax.set_ylabel(spec.y_label)
    ax.set_title(spec.title)
    ax.legend()
    return _save(fig, out_path)


def render_histogram(frame: pd.DataFrame, stats: BimodalityStats, out_path: str,
                     title: str = 'Trained weight distribution') -> str:
    """Bar histogram (bin_left,bin_right,count) with the detected modes marked"""
    if frame.empty or frame['count'].sum() == 0:
        raise ValueError("histogram has no counts to plot")
    _style()
    fig, ax = plt.subplots(figsize=(8, 5))
    widths = frame['bin_right'] - frame['bin_left']
    ax.bar(frame['bin_left'], frame['count'], width=widths, align='edge', alpha=0.7)
    for mode in sorted({stats.mode_low, stats.mode_high}):
        ax.axvline(mode, color='red', linestyle='--', lw=1.2)
    verdict = 'bimodal' if stats.bimodal else 'unimodal'
    ax.set_xlabel('weight value')
    ax.set_ylabel('count')
    ax.set_title(f"{title} ({verdict}, central mass {stats.central_mass:.3f})")
    return _save(fig, out_path)
