"""Optical spectrum of the field envelope and a comb-contrast metric.

The PSD is a Welch estimate: Hann window, 50 % overlap, no detrending,
two-sided because the envelope is complex. The segment length is the
multiple of the samples per period closest to 2^14, so that every
harmonic of the repetition rate sits exactly on a frequency bin.

Comb contrast: the comb may be offset from the carrier by the mean
interpulse phase step, so the offset is found first by folding the PSD
modulo the repetition rate. For each harmonic order ``k = -5..5`` the
peak (max over the bin and its two neighbours) is compared with the
median PSD between the neighbouring harmonics, in dB. The reported value
is the median over harmonics whose peak is within 30 dB of the strongest.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import signal

from ..engine import FieldTrace
from ..errors import InputError
from ..model import CONSTANTS

__all__ = [
    "SpectrumResult",
    "WelchAccumulator",
    "segment_length",
    "optical_spectrum",
    "comb_contrast",
    "wavelength_spacing",
    "MIN_SPECTRUM_SAMPLES",
]

MIN_SPECTRUM_SAMPLES = 1 << 16
N_HARMONICS = 5
DYNAMIC_RANGE_DB = 30.0


def wavelength_spacing(freq_spacing, wavelength=1550e-9):
    """``lambda^2 f / c``: wavelength interval of a small frequency interval."""
    return wavelength**2 * freq_spacing / CONSTANTS.c


def segment_length(samples_per_period, target=1 << 14):
    spp = int(samples_per_period)
    return spp * max(1, int(round(target / spp)))


class WelchAccumulator:
    """Running Welch average over contiguous blocks of one record."""

    def __init__(self, dt, nperseg):
        self.dt = dt
        self.nperseg = int(nperseg)
        self.hop = self.nperseg // 2
        self.window = signal.get_window("hann", self.nperseg)
        self._scale = 1.0 / ((1.0 / dt) * np.sum(self.window**2))
        self._sum = np.zeros(self.nperseg)
        self._tail = np.empty(0, dtype=np.complex128)
        self.n_segments = 0

    def add(self, samples):
        x = np.concatenate([self._tail, np.asarray(samples, dtype=np.complex128)])
        if x.size >= self.nperseg:
            segs = np.lib.stride_tricks.sliding_window_view(x, self.nperseg)[:: self.hop]
            for i in range(0, segs.shape[0], 64):
                spec = sfft.fft(segs[i:i + 64] * self.window, axis=1)
                self._sum += (np.abs(spec) ** 2).sum(axis=0)
            k = segs.shape[0]
            self.n_segments += k
            x = x[k * self.hop:]
        self._tail = x

    def result(self):
        if self.n_segments == 0:
            raise InputError("no complete Welch segment")
        psd = self._sum * self._scale / self.n_segments
        freqs = sfft.fftfreq(self.nperseg, self.dt)
        return sfft.fftshift(freqs), sfft.fftshift(psd)


@dataclass(frozen=True)
class SpectrumResult:
    freqs: np.ndarray
    psd: np.ndarray
    comb_contrast: float
    tone_spacing: float
    tone_spacing_wavelength: float
    comb_offset: float = 0.0
    harmonic_contrasts: dict = field(default_factory=dict)
    nperseg: int = 0
    n_segments: int = 0


def comb_contrast(freqs, psd, rep_rate):
    """Return ``(contrast_db, comb_offset_hz, {order: contrast_db})``."""
    freqs = np.asarray(freqs)
    psd = np.asarray(psd)
    df = freqs[1] - freqs[0]
    h = int(round(rep_rate / df))
    if h < 8:
        raise InputError("frequency resolution too coarse for the repetition rate")
    i0 = int(np.argmin(np.abs(freqs)))
    orders = np.arange(-N_HARMONICS, N_HARMONICS + 1)
    lo_ok = i0 - (N_HARMONICS + 1) * h - h // 2 >= 0
    hi_ok = i0 + (N_HARMONICS + 1) * h + h // 2 < psd.size
    if not (lo_ok and hi_ok):
        raise InputError("spectrum span does not cover the harmonics")
    shifts = np.arange(-(h // 2), h - h // 2)
    fold = np.array([psd[i0 + j + orders * h].sum() for j in shifts])
    j = int(shifts[np.argmax(fold)])
    g = max(2, h // 8)
    peaks, floors = [], []
    for k in orders:
        p = i0 + j + k * h
        peaks.append(psd[p - 1:p + 2].max())
        between = np.concatenate([psd[p - h + g:p - g + 1], psd[p + g:p + h - g + 1]])
        floors.append(np.median(between))
    peaks = np.array(peaks)
    floors = np.array(floors)
    with np.errstate(divide="ignore"):
        c = 10 * np.log10(peaks / np.maximum(floors, np.finfo(float).tiny))
    keep = peaks >= peaks.max() * 10 ** (-DYNAMIC_RANGE_DB / 10)
    per = {int(k): float(v) for k, v, m in zip(orders, c, keep) if m}
    return float(np.median(c[keep])), j * df, per


def optical_spectrum(trace: FieldTrace, nperseg=None, wavelength=1550e-9, accumulator=None) -> SpectrumResult:
    """Welch spectrum of ``trace`` and its comb contrast.

    A pre-filled :class:`WelchAccumulator` may be passed instead of
    processing ``trace`` (streaming use); ``trace`` then only supplies
    the repetition rate.
    """
    if accumulator is None:
        if len(trace) < MIN_SPECTRUM_SAMPLES:
            raise InputError(f"spectrum needs at least {MIN_SPECTRUM_SAMPLES} samples")
        nperseg = nperseg or segment_length(trace.samples_per_period)
        accumulator = WelchAccumulator(trace.dt, nperseg)
        accumulator.add(trace.samples)
    elif accumulator.n_segments * accumulator.hop + accumulator.nperseg < MIN_SPECTRUM_SAMPLES:
        raise InputError(f"spectrum needs at least {MIN_SPECTRUM_SAMPLES} samples")
    freqs, psd = accumulator.result()
    cc, off, per = comb_contrast(freqs, psd, trace.rep_rate)
    return SpectrumResult(freqs, psd, cc, trace.rep_rate, wavelength_spacing(trace.rep_rate, wavelength), off, per,
                          accumulator.nperseg, accumulator.n_segments)
