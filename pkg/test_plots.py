"""
Tests for SVG rendering of sweep summaries
"""

import numpy as np
import pandas as pd
import pytest

from analysis import BimodalityStats
from experiments import SUMMARY_COLUMNS, write_frame
from plots import PLOT_SPECS, PlotSpec, render_histogram, render_plot


def _summary(tmp_path, rows, name='sweep.csv'):
    return write_frame(pd.DataFrame(rows, columns=SUMMARY_COLUMNS), str(tmp_path / name))


@pytest.fixture
def quantization_csv(tmp_path):
    rows = []
    for k, acc, margin in ((32, 1.0, 2.0), (8, 1.0, 2.1), (2, 0.99, 2.6), (1, 0.97, 1.4)):
        rows += [(k, 'bit_accuracy', acc, 0.01, 3), (k, 'stability_margin', margin, 0.1, 3)]
    return _summary(tmp_path, rows, 'quantization.csv')


def test_renders_svg(tmp_path, quantization_csv):
    out = render_plot(quantization_csv, PLOT_SPECS['quantization'], str(tmp_path / 'q.svg'))
    text = open(out, encoding='utf-8').read()
    assert text.lstrip().startswith('<?xml')
    assert '<svg' in text


def test_svg_is_byte_deterministic(tmp_path, quantization_csv):
    a = render_plot(quantization_csv, PLOT_SPECS['quantization'], str(tmp_path / 'a.svg'))
    b = render_plot(quantization_csv, PLOT_SPECS['quantization'], str(tmp_path / 'b.svg'))
    assert open(a, 'rb').read() == open(b, 'rb').read()


def test_log_log_with_fit(tmp_path):
    rows = []
    for k in (8, 6, 4, 3, 2):
        delta2 = (2.0 / (2 ** k - 1)) ** 2
        rows += [(k, 'delta_squared', delta2, 0.0, 3),
                 (k, 'margin_degradation', 0.5 * delta2 ** 0.8, 1e-4, 3)]
    csv = _summary(tmp_path, rows)
    out = render_plot(csv, PLOT_SPECS['scaling_ridge'], str(tmp_path / 's.svg'))
    assert open(out, encoding='utf-8').read().count('<svg') == 1


def test_empty_data_writes_nothing(tmp_path):
    csv = _summary(tmp_path, [])
    out = tmp_path / 'empty.svg'
    with pytest.raises(ValueError):
        render_plot(csv, PLOT_SPECS['quantization'], str(out))
    assert not out.exists()


def test_missing_metric_writes_nothing(tmp_path, quantization_csv):
    out = tmp_path / 'noise.svg'
    with pytest.raises(ValueError, match="recall_full"):
        render_plot(quantization_csv, PLOT_SPECS['noise'], str(out))
    assert not out.exists()


def test_log_log_without_positive_points(tmp_path):
    csv = _summary(tmp_path, [(4, 'delta_squared', 0.01, 0, 2), (4, 'margin_degradation', -0.1, 0, 2)])
    out = tmp_path / 'neg.svg'
    with pytest.raises(ValueError, match="positive"):
        render_plot(csv, PLOT_SPECS['scaling_ridge'], str(out))
    assert not out.exists()


def test_malformed_csv(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text("axis_value,metric_name,mean,std,trial_count\n2,bit_accuracy,high,0,3\n")
    with pytest.raises(ValueError):
        render_plot(str(path), PlotSpec('t', 'x', 'y', ('bit_accuracy',)), str(tmp_path / 'b.svg'))
    with pytest.raises(FileNotFoundError):
        render_plot(str(tmp_path / 'none.csv'), PLOT_SPECS['pruning'], str(tmp_path / 'c.svg'))


def test_histogram_plot(tmp_path):
    edges = np.linspace(-1, 1, 11)
    frame = pd.DataFrame({'bin_left': edges[:-1], 'bin_right': edges[1:],
                          'count': [5, 9, 3, 1, 0, 0, 1, 4, 8, 6]})
    stats = BimodalityStats(-0.7, 0.7, 0.0, 0.0, True)
    out = render_histogram(frame, stats, str(tmp_path / 'h.svg'))
    assert '<svg' in open(out, encoding='utf-8').read()
    with pytest.raises(ValueError):
        render_histogram(frame.assign(count=0), stats, str(tmp_path / 'z.svg'))
