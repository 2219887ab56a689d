"""
Metrics Module
==============
Gap-restricted evaluation of waveform reconstructions:
- gap segments with an optional context margin
- Discrete Frechet Distance, Mean Range Difference, MAE and RMSE
- reference reconstructors (zero fill, linear interpolation, ground truth) and the model
- dataset-level evaluation reports and comparison tables
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

import dsp
from config import settings, templates
from models import EvalReport, SampleMetrics
from xinet.errors import ConfigError, ShapeError
from xinet.network import predict

logger = logging.getLogger(__name__)

DFD_METRICS = ('amplitude', 'euclidean')


# =========================================
# SEGMENTS AND POINTWISE METRICS
# =========================================
def gap_segment(w, gap, margin=0):
    """
    Cutting [gap.start - margin, gap.end + margin) out of a waveform,
    clipped at the record edges.
    """
    if margin < 0:
        raise ConfigError(f"margin must be >= 0, got {margin}")
    samples = w.samples if isinstance(w, dsp.Waveform) else np.asarray(w, dtype=np.float64)
    start = max(0, gap.start_index - margin)
    end = min(len(samples), gap.end_index + margin)
    return samples[start:end]


def _check_pair(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"length mismatch: {p.shape} vs {q.shape}")
    if p.size == 0:
        raise ConfigError("metric of empty arrays")
    return p, q


def mae(p, q):
    p, q = _check_pair(p, q)
    return float(np.mean(np.abs(p - q)))


def rmse(p, q):
    p, q = _check_pair(p, q)
    return float(np.sqrt(np.mean((p - q) ** 2)))


def point_distances(p, q, metric='amplitude', sample_rate_hz=1.0):
    """
    Pairwise point distances d(i, j).

    Parameters:
    - metric: 'amplitude' for |p_i - q_j|, 'euclidean' for the 2D distance
      between (t_i, p_i) and (t_j, q_j) with t in seconds
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    amplitude = np.abs(p[:, None] - q[None, :])
    if metric == 'amplitude':
        return amplitude
    if metric == 'euclidean':
        lag = (np.arange(len(p))[:, None] - np.arange(len(q))[None, :]) / sample_rate_hz
        return np.hypot(lag, amplitude)
    raise ConfigError(f"unknown DFD point metric '{metric}', expected one of {DFD_METRICS}")


def dfd(p, q, metric='amplitude', sample_rate_hz=1.0):
    """
    Discrete Frechet Distance by dynamic programming:
    ca(i, j) = max(d(i, j), min(ca(i-1, j), ca(i-1, j-1), ca(i, j-1))).
    """
    if len(p) == 0 or len(q) == 0:
        raise ConfigError("dfd of an empty curve")
    d = point_distances(p, q, metric, sample_rate_hz).tolist()
    n, m = len(d), len(d[0])
    prev = [0.0] * m
    prev[0] = d[0][0]
    for j in range(1, m):
        prev[j] = max(d[0][j], prev[j - 1])
    for i in range(1, n):
        row = d[i]
        cur = [0.0] * m
        cur[0] = max(row[0], prev[0])
        for j in range(1, m):
            cur[j] = max(row[j], min(prev[j], prev[j - 1], cur[j - 1]))
        prev = cur
    return float(prev[m - 1])


def amplitude_range(x):
    return float(np.max(x) - np.min(x))


def mrd(preds, targets):
    """|mean range of predictions - mean range of targets| over a dataset."""
    if not preds or len(preds) != len(targets):
        raise ConfigError(f"mrd needs equal nonempty lists, got {len(preds)} and {len(targets)}")
    pred_ranges = [amplitude_range(p) for p in preds]
    target_ranges = [amplitude_range(t) for t in targets]
    return abs(float(np.mean(pred_ranges)) - float(np.mean(target_ranges)))


# =========================================
# RECONSTRUCTORS
# =========================================
def splice(gapped, output, gap):
    """Observed samples kept verbatim, model output used inside the gap only."""
    samples = np.array(gapped.samples, dtype=np.float64)
    output = np.asarray(output, dtype=np.float64)
    if output.shape != samples.shape:
        raise ShapeError(f"reconstruction has {output.shape[0]} samples, waveform has {samples.shape[0]}")
    samples[gap.start_index:gap.end_index] = output[gap.start_index:gap.end_index]
    return dsp.Waveform(samples, gapped.sample_rate_hz)


def linear_interp_baseline(sample):
    """Filling the gap with the line through its two neighbouring observed samples."""
    gap = sample.gap
    if gap.start_index < 1 or gap.end_index > sample.length - 1:
        raise ConfigError(f"linear interpolation needs an interior gap, got "
                          f"[{gap.start_index}, {gap.end_index}) in {sample.length} samples")
    samples = sample.input.samples.copy()
    left, right = gap.start_index - 1, gap.end_index
    inside = np.arange(gap.start_index, gap.end_index)
    samples[inside] = np.interp(inside, [left, right], [samples[left], samples[right]])
    return dsp.Waveform(samples, sample.input.sample_rate_hz)


def zero_fill(samples):
    """The unfilled reference: the gapped input itself."""
    return [s.input.samples for s in samples]


def ground_truth(samples):
    return [s.target.samples for s in samples]


def linear_interp(samples):
    return [linear_interp_baseline(s).samples for s in samples]


class ModelReconstructor:
    """Batched model inference spliced into each gap."""

    def __init__(self, model, batch_size=8):
        self.model = model
        self.batch_size = batch_size
        self.name = model.config.variant

    def __call__(self, samples):
        expected = self.model.config.input_length
        for s in samples:
            if s.length != expected:
                raise ShapeError(f"sample of {s.length} points does not match the model "
                                 f"input length {expected}")
        if not samples:
            return []
        outputs = predict(self.model, np.stack([s.input.samples for s in samples]), self.batch_size)
        return [splice(s.input, out, s.gap).samples for s, out in zip(samples, outputs)]


# Registry of reference reconstructors
RECONSTRUCTORS = {
    'zero_fill': zero_fill,
    'linear_interp': linear_interp,
    'ground_truth': ground_truth,
}


def get_reconstructor(name):
    """Retrieving a reference reconstructor by name."""
    if name not in RECONSTRUCTORS:
        raise ConfigError(f"unknown baseline '{name}', expected one of {sorted(RECONSTRUCTORS)}")
    return RECONSTRUCTORS[name]


# =========================================
# EVALUATION
# =========================================
class Evaluator:
    """
    Gap-restricted evaluation over a dataset.
    Per-sample work may fan out over threads; reduction is in dataset order.
    """

    def __init__(self, workers=settings.EVAL_WORKERS):
        self.workers = workers

    def sample_metrics(self, index, reconstruction, sample, margin=0, dfd_metric='amplitude'):
        pred = gap_segment(reconstruction, sample.gap, margin)
        target = gap_segment(sample.target, sample.gap, margin)
        return SampleMetrics(
            index=index,
            dfd=dfd(pred, target, dfd_metric, sample.target.sample_rate_hz),
            mae=mae(pred, target),
            rmse=rmse(pred, target),
            range_pred=amplitude_range(pred),
            range_target=amplitude_range(target),
        )

    def evaluate(self, samples, reconstructor, margin=0, dfd_metric='amplitude', name=None):
        """
        Evaluating one reconstructor.

        Parameters:
        - samples: list of Sample
        - reconstructor: baseline name or a callable mapping samples to full-length arrays
        - margin: context samples on each side of the gap
        - dfd_metric: 'amplitude' or 'euclidean'

        Returns:
        - EvalReport
        """
        if not samples:
            raise ConfigError("cannot evaluate an empty dataset")
        if dfd_metric not in DFD_METRICS:
            raise ConfigError(f"unknown DFD point metric '{dfd_metric}'")
        if isinstance(reconstructor, str):
            name = name or reconstructor
            reconstructor = get_reconstructor(reconstructor)
        name = name or getattr(reconstructor, 'name', getattr(reconstructor, '__name__', 'model'))

        reconstructions = reconstructor(samples)
        jobs = [(i, r, s, margin, dfd_metric) for i, (r, s) in enumerate(zip(reconstructions, samples))]
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                per_sample = list(pool.map(lambda job: self.sample_metrics(*job), jobs))
        else:
            per_sample = [self.sample_metrics(*job) for job in jobs]

        report = EvalReport(
            reconstructor=name,
            margin=margin,
            dfd_metric=dfd_metric,
            dfd_mean=float(np.mean([m.dfd for m in per_sample])),
            mrd=abs(float(np.mean([m.range_pred for m in per_sample]))
                    - float(np.mean([m.range_target for m in per_sample]))),
            mae_mean=float(np.mean([m.mae for m in per_sample])),
            rmse_mean=float(np.mean([m.rmse for m in per_sample])),
            samples=per_sample,
        )
        logger.info("%s: DFD %.4f MRD %.4f MAE %.4f RMSE %.4f over %d samples", name,
                    report.dfd_mean, report.mrd, report.mae_mean, report.rmse_mean, len(per_sample))
        return report


# Global evaluator instance
evaluator = Evaluator()

def get_evaluator():
    """Retrieving evaluator instance."""
    return evaluator


# =========================================
# REPORT FORMATTING
# =========================================
def compare_table(reports):
    """
    Aligned text table with one column per report:
    Metric | Reference(Unfilled) | ... | Xi-Net o/p
    """
    if not reports:
        raise ConfigError("no reports to tabulate")
    header = [templates.METRIC_HEADER] + [templates.column_label(r.reconstructor) for r in reports]
    rows = [header]
    for label, field in templates.METRIC_ROWS:
        values = [getattr(r, field) for r in reports]
        rows.append([f"{label} {templates.LOWER_IS_BETTER}"]
                    + [f"{v:.4f}" if math.isfinite(v) else 'nan' for v in values])

    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = []
    for n, row in enumerate(rows):
        lines.append(' | '.join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip())
        if n == 0:
            lines.append('-+-'.join(templates.TABLE_RULE * w for w in widths))
    lines.append('')
    lines.append(templates.TABLE_FOOTNOTE.format(margin=reports[0].margin,
                                                 dfd_metric=reports[0].dfd_metric))
    return '\n'.join(lines) + '\n'


def format_table(report):
    return compare_table([report])
