"""
Report Templates
================
Text layouts for evaluation tables, CSV headers and figure labels.
"""

# Rows of the evaluation table, in print order: (label, EvalReport field)
METRIC_ROWS = [
    ('DFD', 'dfd_mean'),
    ('MRD', 'mrd'),
    ('MAE', 'mae_mean'),
    ('RMSE', 'rmse_mean'),
]

# Column headers per reconstructor name
COLUMN_LABELS = {
    'zero_fill': 'Reference(Unfilled)',
    'linear_interp': 'Linear interp',
    'ground_truth': 'Ground truth',
    'full': 'Xi-Net o/p',
    'time_only': 'Xi-Net time-only',
    'single_encoder': 'Xi-Net single-encoder',
}

METRIC_HEADER = 'Metric'
LOWER_IS_BETTER = '↓'
TABLE_FOOTNOTE = "↓ lower is better; metrics computed on gap segments (margin {margin} samples, DFD point metric: {dfd_metric})"

TABLE_RULE = '-'

# CSV headers
HISTORY_CSV_HEADER = ['epoch', 'lr', 'train_loss', 'val_gap_mae']
TRACE_CSV_HEADER = ['index', 'time_s', 'original', 'gapped', 'reconstructed']

# Three-panel figure, top to bottom
PLOT_PANEL_TITLES = (
    'Original waveform',
    'Waveform with random gap',
    'Reconstructed waveform',
)
PLOT_X_LABEL = 'Time (s)'
PLOT_Y_LABEL = 'Amplitude'
PLOT_GAP_COLOR = '#f4cccc'
PLOT_LINE_COLOR = '#1f4e79'


def column_label(name):
    """Header text for a reconstructor column."""
    return COLUMN_LABELS.get(name, name)
