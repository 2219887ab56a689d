"""
Dataset Module
==============
Synthetic seismic-like records, gap synthesis and waveform file I/O:
- generate records: band-limited Gaussian noise plus 1-3 damped event wavelets
- cut one 0.5-1 s zero-filled gap per record, away from the record edges
- mirror augmentation (time reversal) doubling a training set
- one-column text waveform files and a JSON manifest per dataset directory
"""

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

import dsp
from config import settings
from models import DatasetManifest, GapSpec
from xinet.errors import ConfigError, DataFormatError, DataNotFoundError

logger = logging.getLogger(__name__)


@dataclass
class Sample:
    """Gapped input, complete target and the gap between them."""

    input: dsp.Waveform
    target: dsp.Waveform
    gap: GapSpec

    @property
    def length(self):
        return self.target.length


@dataclass
class EventSpec:
    """One exponentially enveloped damped sinusoid."""

    onset_s: float
    amplitude: float
    frequency_hz: float
    decay_s: float


# =========================================
# SYNTHETIC RECORDS
# =========================================
def event_wavelet(times, event):
    """A * exp(-(t - t0) / tau) * sin(2 pi f (t - t0)) for t >= t0, zero before."""
    lag = times - event.onset_s
    active = lag >= 0
    out = np.zeros_like(times)
    out[active] = (event.amplitude * np.exp(-lag[active] / event.decay_s)
                   * np.sin(2 * np.pi * event.frequency_hz * lag[active]))
    return out


def draw_events(rng, duration_s, sample_rate_hz, count=None):
    """Drawing 1-3 events (or `count`) with onsets in the first 70% of the record."""
    if count is None:
        count = int(rng.integers(1, 4))
    max_freq = min(8.0, 0.3 * sample_rate_hz)
    events = []
    for _ in range(count):
        events.append(EventSpec(
            onset_s=float(rng.uniform(0.0, 0.7 * duration_s)),
            amplitude=float(rng.uniform(0.5, 1.0)),
            frequency_hz=float(rng.uniform(1.0, max_freq)),
            decay_s=float(rng.uniform(0.5, 2.0)),
        ))
    return events


def band_limited_noise(rng, length, sample_rate_hz, std):
    """White Gaussian noise bandpassed into the signal band and rescaled to `std`."""
    white = rng.standard_normal(length)
    if std == 0:
        return np.zeros(length)
    high = min(settings.BANDPASS_HIGH_HZ, 0.4 * sample_rate_hz)
    filtered = dsp.butterworth_bandpass(dsp.Waveform(white, sample_rate_hz),
                                        settings.BANDPASS_LOW_HZ, high).samples
    return std * filtered / filtered.std()


def model_length_warning(length, patch=4, window=8, stages=3):
    """
    Checking a record length against the model geometry.

    Returns:
    - None if length/patch is divisible by window * 2^stages, else a message
    """
    unit = patch * window * 2 ** stages
    if length % unit:
        return (f"length {length} is not a multiple of patch*window*2^stages = {unit}; "
                f"the default model geometry cannot consume it")
    return None


def generate_waveform(seed, length, sample_rate_hz, noise_std=0.05, n_events=None, strict=True):
    """
    Generating one synthetic record, deterministic per seed.

    Parameters:
    - seed: integer seed
    - length: samples (strict mode: patch size 4 times a power of two)
    - sample_rate_hz: sampling rate
    - noise_std: background noise level (events have amplitude 0.5-1)
    - n_events: fixed event count, default random in 1-3

    Returns:
    - Waveform
    """
    if length < 16:
        raise ConfigError(f"record length must be at least 16 samples, got {length}")
    tokens = length // 4
    if strict and (length % 4 or tokens & (tokens - 1)):
        raise ConfigError(f"record length {length} is not 4 times a power of two")

    rng = np.random.default_rng(seed)
    duration = length / sample_rate_hz
    times = np.arange(length) / sample_rate_hz
    events = draw_events(rng, duration, sample_rate_hz, n_events)
    samples = band_limited_noise(rng, length, sample_rate_hz, noise_std)
    for event in events:
        samples = samples + event_wavelet(times, event)
    return dsp.Waveform(samples, sample_rate_hz)


# =========================================
# GAPS
# =========================================
def make_sample(target, gap):
    """Zero-filling the gap of a complete waveform."""
    if gap.end_index > target.length:
        raise ConfigError(f"gap [{gap.start_index}, {gap.end_index}) exceeds length {target.length}")
    gapped = target.samples.copy()
    gapped[gap.start_index:gap.end_index] = 0.0
    return Sample(dsp.Waveform(gapped, target.sample_rate_hz), target, gap)


def cut_gap(w, rng, min_s=settings.GAP_MIN_SECONDS, max_s=settings.GAP_MAX_SECONDS,
            edge_fraction=settings.GAP_EDGE_FRACTION):
    """
    Cutting one random gap.

    The gap length is uniform over [ceil(min_s * sr), floor(max_s * sr)] samples
    and the gap stays out of the first and last `edge_fraction` of the record.
    """
    if w.duration_s <= 2.0:
        raise ConfigError(f"waveform of {w.duration_s:.3f} s is too short for a gap (need > 2 s)")
    sr = w.sample_rate_hz
    shortest = max(1, math.ceil(min_s * sr))
    longest = math.floor(max_s * sr)
    edge = math.ceil(edge_fraction * w.length)
    if w.length - 2 * edge < longest:
        raise ConfigError(f"record of {w.length} samples cannot hold a {longest}-sample gap "
                          f"away from its edges")
    gap_length = int(rng.integers(shortest, longest + 1))
    start = int(rng.integers(edge, w.length - edge - gap_length + 1))
    return make_sample(w, GapSpec(start_index=start, length_samples=gap_length, sample_rate_hz=sr))


def mirror_sample(sample):
    """Time-reversing input and target together; the gap indices are remapped."""
    return Sample(sample.input.reversed(), sample.target.reversed(), sample.gap.mirrored(sample.length))


def mirror_augment(samples):
    """Appending a time-reversed copy of every sample (2x the dataset)."""
    samples = list(samples)
    return samples + [mirror_sample(s) for s in samples]


# =========================================
# DATASETS
# =========================================
def build_dataset(count, length=settings.DEFAULT_LENGTH, sample_rate_hz=settings.DEFAULT_SAMPLE_RATE_HZ,
                  seed=0, noise_std=0.05, pipeline=None, workers=1):
    """
    Building `count` model-ready samples.

    Each raw record is generated at half the target rate and length, then
    preprocessed (upsample by 2, bandpass) and given one gap.

    Returns:
    - list of Sample
    """
    if length % 2:
        raise ConfigError(f"record length must be even, got {length}")
    pipeline = pipeline or dsp.get_preprocess_pipeline()
    children = np.random.SeedSequence(seed).spawn(count)

    def build_one(child):
        wave_seed, gap_seed = (int(s) for s in child.generate_state(2))
        raw = generate_waveform(wave_seed, length // 2, sample_rate_hz / 2.0,
                                noise_std=noise_std, strict=False)
        processed, _ = pipeline.run_pipeline(raw)
        return cut_gap(processed, np.random.default_rng(gap_seed))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(build_one, children))
    else:
        samples = [build_one(child) for child in children]
    logger.info("built %d samples of %d points at %.1f Hz", count, length, sample_rate_hz)
    return samples


def split_indices(count, val_fraction=settings.VAL_FRACTION, seed=0):
    """Disjoint sorted train / val index lists."""
    order = np.random.default_rng(seed).permutation(count)
    n_val = int(round(count * val_fraction))
    val = sorted(int(i) for i in order[:n_val])
    train = sorted(int(i) for i in order[n_val:])
    return train, val


# =========================================
# FILE I/O
# =========================================
def save_waveform(path, w, gap=None):
    """
    Writing a waveform as UTF-8 text: '#' metadata lines, then one "%.17g"
    amplitude per line.
    """
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"# sample_rate_hz: {w.sample_rate_hz!r}\n")
        if gap is not None:
            f.write(f"# gap: {gap.start_index} {gap.length_samples}\n")
        for value in w.samples:
            f.write("%.17g\n" % value)


def load_waveform(path):
    """
    Reading a waveform file.

    Returns:
    - (Waveform, GapSpec or None)
    """
    if not os.path.exists(path):
        raise DataNotFoundError(f"waveform file not found: {path}")
    sample_rate = None
    gap_fields = None
    values = []
    with open(path, encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith('#'):
                key, _, value = text[1:].partition(':')
                key = key.strip()
                try:
                    if key == 'sample_rate_hz':
                        sample_rate = float(value)
                    elif key == 'gap':
                        start, length = value.split()
                        gap_fields = (int(start), int(length))
                except ValueError:
                    raise DataFormatError(f"bad '{key}' header: {value.strip()!r}", path, line_no)
                continue
            try:
                value = float(text)
            except ValueError:
                raise DataFormatError(f"not a number: {text!r}", path, line_no)
            if not np.isfinite(value):
                raise DataFormatError(f"non-finite sample: {text!r}", path, line_no)
            values.append(value)

    if sample_rate is None:
        raise DataFormatError("missing '# sample_rate_hz:' header", path)
    try:
        waveform = dsp.Waveform(np.array(values), sample_rate)
    except (ConfigError, ValueError) as e:
        raise DataFormatError(str(e), path)
    gap = None
    if gap_fields is not None:
        gap = GapSpec(start_index=gap_fields[0], length_samples=gap_fields[1], sample_rate_hz=sample_rate)
        if gap.end_index > waveform.length:
            raise DataFormatError(f"gap ends at {gap.end_index} beyond {waveform.length} samples", path)
    return waveform, gap


def save_manifest(path, manifest):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(manifest.model_dump_json(indent=2))


def load_manifest(path, check_files=True):
    """
    Reading and validating a manifest.

    With check_files, every listed file must exist, parse and have the
    manifest's length and sample rate.
    """
    if not os.path.exists(path):
        raise DataNotFoundError(f"manifest not found: {path}")
    try:
        with open(path, encoding='utf-8') as f:
            manifest = DatasetManifest.model_validate(json.load(f))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"invalid JSON ({e.msg})", path, e.lineno)
    except ValueError as e:
        raise DataFormatError(f"invalid manifest: {e}", path)

    if check_files:
        root = os.path.dirname(os.path.abspath(path))
        for name in manifest.files:
            file_path = os.path.join(root, name)
            if not os.path.exists(file_path):
                raise DataFormatError(f"manifest references missing file '{name}'", path)
            waveform, _ = load_waveform(file_path)
            if waveform.length != manifest.length or waveform.sample_rate_hz != manifest.sample_rate_hz:
                raise DataFormatError(f"file '{name}' has {waveform.length} samples at "
                                      f"{waveform.sample_rate_hz} Hz, manifest says {manifest.length} "
                                      f"at {manifest.sample_rate_hz} Hz", path)
    return manifest


def write_dataset(directory, samples, seed, val_fraction=settings.VAL_FRACTION):
    """
    Writing samples into `directory`: record_NNNN.txt (complete, with gap header),
    record_NNNN.gapped.txt and manifest.json.

    Returns:
    - DatasetManifest
    """
    os.makedirs(directory, exist_ok=True)
    files = []
    for i, sample in enumerate(samples):
        name = f"record_{i:04d}.txt"
        save_waveform(os.path.join(directory, name), sample.target, sample.gap)
        save_waveform(os.path.join(directory, f"record_{i:04d}.gapped.txt"), sample.input, sample.gap)
        files.append(name)
    train, val = split_indices(len(samples), val_fraction, seed)
    first = samples[0].target if samples else None
    manifest = DatasetManifest(
        sample_rate_hz=first.sample_rate_hz if first else settings.DEFAULT_SAMPLE_RATE_HZ,
        length=first.length if first else settings.DEFAULT_LENGTH,
        files=files,
        gaps=[s.gap for s in samples],
        seed=seed,
        split={'train': [files[i] for i in train], 'val': [files[i] for i in val]},
    )
    save_manifest(os.path.join(directory, 'manifest.json'), manifest)
    logger.info("wrote %d records to %s (%d train / %d val)", len(files), directory, len(train), len(val))
    return manifest


def load_dataset(manifest_path, split=None):
    """
    Loading the samples of a dataset directory.

    Parameters:
    - manifest_path: path to manifest.json
    - split: 'train', 'val' or None for every file

    Returns:
    - (manifest, list of Sample)
    """
    manifest = load_manifest(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    wanted = set(manifest.split.get(split, [])) if split else set(manifest.files)
    samples = []
    for name, gap in zip(manifest.files, manifest.gaps):
        if name not in wanted:
            continue
        target, _ = load_waveform(os.path.join(root, name))
        samples.append(make_sample(target, gap))
    return manifest, samples
