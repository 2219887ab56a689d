"""
DSP Module
==========
Signal preprocessing and frequency tokenization:
1. Upsampling - one averaged point between every two samples (2x rate)
2. Bandpass - Butterworth design by bilinear transform, run as SOS cascade
3. Transform - radix-2 FFT (Bluestein for other lengths) and its inverse
4. Tokenization - complex spectrum stacked as two real channels

The "DTFT" of the model description is realized as the same-length DFT
X[k] = sum_n x[n] exp(-2j pi k n / L), which keeps the token count equal in
the time and frequency domains.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import sosfilt

from config import settings
from xinet import autodiff as ad
from xinet.errors import ConfigError, NumericError

logger = logging.getLogger(__name__)


# =========================================
# DATA TYPES
# =========================================
@dataclass
class Waveform:
    """Finite real amplitude sequence with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        self.sample_rate_hz = float(self.sample_rate_hz)
        if self.samples.size < 2:
            raise ConfigError(f"waveform needs at least 2 samples, got {self.samples.size}")
        if self.sample_rate_hz <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(self.samples)):
            raise NumericError("waveform contains NaN/Inf samples")

    @property
    def length(self):
        return self.samples.size

    @property
    def duration_s(self):
        return self.length / self.sample_rate_hz

    def reversed(self):
        return Waveform(self.samples[::-1].copy(), self.sample_rate_hz)


@dataclass
class Spectrum:
    """Complex spectrum of a waveform as real and imaginary arrays of length L."""

    real_part: np.ndarray
    imag_part: np.ndarray
    sample_rate_hz: float = field(default=1.0)

    def __post_init__(self):
        self.real_part = np.asarray(self.real_part, dtype=np.float64).reshape(-1)
        self.imag_part = np.asarray(self.imag_part, dtype=np.float64).reshape(-1)
        if self.real_part.shape != self.imag_part.shape:
            raise ConfigError(f"spectrum parts differ in length: "
                              f"{self.real_part.size} vs {self.imag_part.size}")

    @property
    def length(self):
        return self.real_part.size

    def as_complex(self):
        return self.real_part + 1j * self.imag_part


# =========================================
# UPSAMPLING
# =========================================
def upsample2x(w):
    """
    Doubling the sample rate by inserting the average of every neighbour pair.

    out[2i] = in[i], out[2i+1] = (in[i] + in[i+1]) / 2 and the last sample is
    replicated, so the output has exactly 2L samples.
    """
    x = w.samples
    if x.size < 2:
        raise ConfigError(f"upsample2x needs at least 2 samples, got {x.size}")
    out = np.empty(2 * x.size)
    out[0::2] = x
    out[1:-1:2] = 0.5 * (x[:-1] + x[1:])
    out[-1] = x[-1]
    return Waveform(out, 2.0 * w.sample_rate_hz)


# =========================================
# BUTTERWORTH BANDPASS
# =========================================
def _validate_band(low_hz, high_hz, sample_rate_hz, order):
    nyquist = sample_rate_hz / 2.0
    if not 0 < low_hz < high_hz < nyquist:
        raise ConfigError(f"invalid band: need 0 < low ({low_hz}) < high ({high_hz}) "
                          f"< Nyquist ({nyquist})")
    if order < 2 or order % 2:
        raise ConfigError(f"bandpass order must be even and >= 2, got {order}")


@lru_cache(maxsize=64)
def _design_sos(low_hz, high_hz, sample_rate_hz, order):
    fs2 = 2.0 * sample_rate_hz
    # Pre-warping so both band edges land exactly on the analog cutoffs
    w_low = fs2 * math.tan(math.pi * low_hz / sample_rate_hz)
    w_high = fs2 * math.tan(math.pi * high_hz / sample_rate_hz)
    bandwidth = w_high - w_low
    center_sq = w_low * w_high

    # Analog lowpass prototype of order n = order / 2, poles on the left unit semicircle
    n = order // 2
    k = np.arange(n)
    prototype = np.exp(1j * math.pi * (2 * k + n + 1) / (2 * n))

    # Lowpass -> bandpass: every prototype pole p splits into two poles
    half = prototype * bandwidth / 2.0
    root = np.sqrt(half * half - center_sq)
    analog_poles = np.concatenate([half + root, half - root])
    analog_gain = bandwidth ** n

    # Bilinear transform: n zeros at s=0 -> z=1, n zeros at infinity -> z=-1
    digital_poles = (fs2 + analog_poles) / (fs2 - analog_poles)
    digital_gain = analog_gain * np.real(fs2 ** n / np.prod(fs2 - analog_poles))

    radius = np.abs(digital_poles)
    if np.any(radius >= 1.0):
        raise NumericError(f"unstable bandpass section: pole magnitude {radius.max():.6f} "
                           f"for band [{low_hz}, {high_hz}] Hz at {sample_rate_hz} Hz, order {order}")

    complex_poles = sorted((p for p in digital_poles if p.imag > 1e-12),
                           key=lambda p: (abs(p), p.imag))
    real_poles = sorted(p.real for p in digital_poles if abs(p.imag) <= 1e-12)

    sections = []
    for p in complex_poles:
        sections.append([1.0, 0.0, -1.0, 1.0, -2.0 * p.real, abs(p) ** 2])
    for r1, r2 in zip(real_poles[0::2], real_poles[1::2]):
        sections.append([1.0, 0.0, -1.0, 1.0, -(r1 + r2), r1 * r2])
    if len(sections) != n:
        raise NumericError(f"bandpass design produced {len(sections)} sections, expected {n}")

    sos = np.array(sections)
    sos[0, :3] *= digital_gain
    return tuple(map(tuple, sos))


def design_bandpass(low_hz, high_hz, sample_rate_hz, order=4):
    """
    Designing a Butterworth bandpass as second-order sections.

    Parameters:
    - low_hz, high_hz: -3 dB band edges
    - sample_rate_hz: sampling rate of the signal to filter
    - order: total (even) bandpass order; order/2 sections

    Returns:
    - sos array [order/2, 6] laid out as (b0, b1, b2, 1, a1, a2)
    """
    _validate_band(low_hz, high_hz, sample_rate_hz, order)
    return np.array(_design_sos(float(low_hz), float(high_hz), float(sample_rate_hz), int(order)))


def sos_poles(sos):
    """Poles of every section (roots of 1 + a1 z^-1 + a2 z^-2)."""
    return np.concatenate([np.roots(section[3:]) for section in sos])


def frequency_response(sos, freqs_hz, sample_rate_hz):
    """Complex response of an SOS cascade at the given frequencies."""
    z = np.exp(1j * 2 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / sample_rate_hz)
    zinv = 1.0 / z
    response = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        response *= (b0 + b1 * zinv + b2 * zinv ** 2) / (a0 + a1 * zinv + a2 * zinv ** 2)
    return response


def butterworth_bandpass(w, low_hz=settings.BANDPASS_LOW_HZ, high_hz=settings.BANDPASS_HIGH_HZ,
                         order=settings.BANDPASS_ORDER):
    """Causal single-pass Butterworth bandpass of a waveform."""
    sos = design_bandpass(low_hz, high_hz, w.sample_rate_hz, order)
    return Waveform(sosfilt(sos, w.samples), w.sample_rate_hz)


# =========================================
# FOURIER TRANSFORM
# =========================================
@lru_cache(maxsize=32)
def _bit_reverse_indices(n):
    bits = n.bit_length() - 1
    positions = np.arange(n)
    reversed_idx = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        reversed_idx |= ((positions >> b) & 1) << (bits - 1 - b)
    return reversed_idx


def _is_power_of_two(n):
    return n > 0 and n & (n - 1) == 0


def _radix2(x):
    """Iterative radix-2 Cooley-Tukey along the last axis."""
    n = x.shape[-1]
    lead = x.shape[:-1]
    a = x[..., _bit_reverse_indices(n)].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(lead + (n // size, size))
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * twiddle
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        a = blocks.reshape(lead + (n,))
        size *= 2
    return a


def _bluestein(x):
    """Chirp-z evaluation of an arbitrary-length DFT through power-of-two FFTs."""
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase small for long inputs
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)

    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    if n > 1:
        b[-(n - 1):] = np.conj(chirp[1:n])[::-1]

    conv = ifft(_radix2(a) * _radix2(b))
    return conv[..., :n] * chirp


def fft(x):
    """Forward DFT along the last axis (radix-2 when L is a power of two, else Bluestein)."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    return _radix2(x) if _is_power_of_two(n) else _bluestein(x)


def ifft(spectrum):
    """Inverse DFT along the last axis."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    return np.conj(fft(np.conj(spectrum))) / spectrum.shape[-1]


def naive_dft(x):
    """O(L^2) DFT by direct summation."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def dft(w):
    """Waveform -> Spectrum of the same length."""
    spectrum = fft(w.samples)
    return Spectrum(spectrum.real, spectrum.imag, w.sample_rate_hz)


def idft(s):
    """Spectrum -> Waveform (real part of the inverse transform)."""
    return Waveform(ifft(s.as_complex()).real, s.sample_rate_hz)


def stack_complex(s):
    """Spectrum -> Tensor [L, 2] with channel 0 real and channel 1 imaginary."""
    return ad.Tensor(np.stack([s.real_part, s.imag_part], axis=-1))


def spectral_tokens(x, scale=None):
    """
    Differentiable dft -> stack_complex for a batch of signals.

    Parameters:
    - x: Tensor [B, L, 1]
    - scale: global spectrum scale (default 1/L)

    Returns:
    - Tensor [B, L, 2]; backward uses the same FFT:
      dx = Re(FFT(g_re)) + Im(FFT(g_im))
    """
    length = x.shape[1]
    scale = 1.0 / length if scale is None else scale
    spectrum = fft(x.data[..., 0]) * scale
    data = np.stack([spectrum.real, spectrum.imag], axis=-1).astype(x.dtype)

    def backward_fn(g):
        grad = fft(g[..., 0] * scale).real + fft(g[..., 1] * scale).imag
        return (grad[..., None].astype(x.dtype),)

    return ad.record_op('spectral_tokens', data, (x,), backward_fn)


def band_energy_fraction(w, low_hz, high_hz):
    """Fraction of signal energy inside [low_hz, high_hz], via Parseval on the DFT."""
    power = np.abs(fft(w.samples)) ** 2
    freqs = np.abs(np.fft.fftfreq(w.length, d=1.0 / w.sample_rate_hz))
    total = power.sum()
    if total == 0:
        return 0.0
    inside = (freqs >= low_hz) & (freqs <= high_hz)
    return float(power[inside].sum() / total)


# =========================================
# PREPROCESSING PIPELINE
# =========================================
class PreprocessPipeline:
    """
    Raw record -> model-ready record.
    Upsamples by 2, then bandpasses at the upsampled rate.
    """

    def __init__(self, low_hz=settings.BANDPASS_LOW_HZ, high_hz=settings.BANDPASS_HIGH_HZ,
                 order=settings.BANDPASS_ORDER):
        self.low_hz = low_hz
        self.high_hz = high_hz
        self.order = order

    def run_pipeline(self, raw):
        """
        Running both preprocessing steps.

        Returns:
        - (processed Waveform, stats dict)
        """
        upsampled = upsample2x(raw)
        filtered = butterworth_bandpass(upsampled, self.low_hz, self.high_hz, self.order)
        stats = {
            'input_length': raw.length,
            'output_length': filtered.length,
            'input_rate_hz': raw.sample_rate_hz,
            'output_rate_hz': filtered.sample_rate_hz,
            'rms_before': float(np.sqrt(np.mean(upsampled.samples ** 2))),
            'rms_after': float(np.sqrt(np.mean(filtered.samples ** 2))),
        }
        return filtered, stats


# Global pipeline instance
preprocess_pipeline = PreprocessPipeline()

def get_preprocess_pipeline():
    """Retrieving the default preprocessing pipeline."""
    return preprocess_pipeline
