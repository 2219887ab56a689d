"""
Plotting Module
===============
Three-panel figure of a reconstruction, top to bottom: original waveform,
waveform with its gap, reconstructed waveform. Written as SVG together with
a CSV of the three traces.
"""

import csv
import logging

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from config import templates  # noqa: E402
from xinet.errors import ShapeError  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed SVG ids and no timestamp, so identical inputs give identical files
matplotlib.rcParams['svg.hashsalt'] = 'xinet'
matplotlib.rcParams['svg.fonttype'] = 'none'


def _check_traces(original, gapped, reconstructed):
    lengths = {original.length, gapped.length, reconstructed.length}
    if len(lengths) != 1:
        raise ShapeError(f"traces differ in length: {original.length}, {gapped.length}, "
                         f"{reconstructed.length}")


def plot_reconstruction(path, original, gapped, reconstructed, gap=None, title=None):
    """
    Writing the three-panel SVG.

    Parameters:
    - path: output .svg path
    - original, gapped, reconstructed: Waveforms of equal length
    - gap: optional GapSpec shaded on every panel
    """
    _check_traces(original, gapped, reconstructed)
    times = np.arange(original.length) / original.sample_rate_hz
    traces = (original.samples, gapped.samples, reconstructed.samples)

    fig, axes = plt.subplots(3, 1, figsize=(10, 7), sharex=True, sharey=True)
    for ax, samples, panel_title in zip(axes, traces, templates.PLOT_PANEL_TITLES):
        if gap is not None:
            ax.axvspan(gap.start_index / original.sample_rate_hz, gap.end_index / original.sample_rate_hz,
                       color=templates.PLOT_GAP_COLOR, linewidth=0)
        ax.plot(times, samples, color=templates.PLOT_LINE_COLOR, linewidth=0.8)
        ax.set_title(panel_title, fontsize=10)
        ax.set_ylabel(templates.PLOT_Y_LABEL)
    axes[-1].set_xlabel(templates.PLOT_X_LABEL)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logger.info("wrote figure %s", path)


def write_trace_csv(path, original, gapped, reconstructed):
    """Writing the three traces side by side (index, time_s, original, gapped, reconstructed)."""
    _check_traces(original, gapped, reconstructed)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(templates.TRACE_CSV_HEADER)
        for i, (a, b, c) in enumerate(zip(original.samples, gapped.samples, reconstructed.samples)):
            writer.writerow([i, repr(i / original.sample_rate_hz), repr(float(a)), repr(float(b)),
                             repr(float(c))])
