"""Histogram and autocorrelation of per-pulse samples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..samples import PulseSamples

__all__ = ["Histogram", "histogram", "AutocorrResult", "autocorrelation", "CI99_Z"]

CI99_Z = 2.576


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    edges: np.ndarray

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def histogram(s: PulseSamples, n_bins=256) -> Histogram:
    """Counts over the full ADC range (or the data range for real samples)."""
    if n_bins < 2:
        raise InputError("n_bins must be >= 2")
    v = np.asarray(s.values)
    if v.size == 0:
        raise InputError("empty sample set")
    if s.bits is not None:
        lo, hi = 0.0, float(2**s.bits)
    else:
        lo, hi = float(v.min()), float(v.max())
        if hi == lo:
            hi = lo + 1.0
    counts, edges = np.histogram(v, bins=n_bins, range=(lo, hi))
    return Histogram(counts, edges)


@dataclass(frozen=True)
class AutocorrResult:
    """Sample autocorrelation at lags ``1..max_lag`` (index 0 is lag 1)."""

    r: np.ndarray
    ci99: float
    n: int

    @property
    def lags(self):
        return np.arange(1, self.r.size + 1)

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.r).max())

    def ratio(self, lag=1) -> float:
        """``|r[lag]|`` in units of the 99 % bound."""
        return float(abs(self.r[lag - 1]) / self.ci99)


def autocorrelation(s, max_lag=100) -> AutocorrResult:
    """Biased-normalized autocorrelation; ``ci99 = 2.576 / sqrt(n)``."""
    x = np.asarray(s.values if isinstance(s, PulseSamples) else s, dtype=float)
    n = x.size
    if max_lag < 1 or max_lag >= n / 10:
        raise InputError("max_lag must be in [1, n/10)")
    xc = x - x.mean()
    den = float(np.dot(xc, xc))
    if den == 0:
        raise InputError("zero-variance input")
    r = np.array([np.dot(xc[k:], xc[:-k]) / den for k in range(1, max_lag + 1)])
    return AutocorrResult(r, CI99_Z / np.sqrt(n), n)
