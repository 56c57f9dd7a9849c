"""Conditional min-entropy of arcsine-distributed ADC samples.

For an arcsine law of width ``D`` digitized with bin width ``d`` the most
likely bin is an edge bin, with probability ``1 - (2/pi) atan(sqrt((D - d)/d))``.
The min-entropy per sample is minus its base-2 logarithm.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ..errors import InputError
from ..rng import stream_for
from ..samples import PulseSamples

__all__ = ["EntropyResult", "min_entropy_from_width", "width_for_entropy", "min_entropy", "percentile_span"]

LO_PCT, HI_PCT = 0.1, 99.9


def min_entropy_from_width(delta_cd, delta_bin=1.0):
    """Bits per sample for arcsine width ``delta_cd`` and bin width ``delta_bin``."""
    if not (math.isfinite(delta_cd) and math.isfinite(delta_bin)) or delta_bin <= 0:
        raise InputError("widths must be finite and delta_bin > 0")
    if delta_cd <= delta_bin:
        return 0.0
    p_max = 1.0 - (2.0 / math.pi) * math.atan(math.sqrt((delta_cd - delta_bin) / delta_bin))
    return -math.log2(p_max)


def width_for_entropy(h_min, delta_bin=1.0):
    """Arcsine width (same units as ``delta_bin``) that yields ``h_min`` bits."""
    if h_min <= 0:
        return float(delta_bin)
    f = lambda d: min_entropy_from_width(d, delta_bin) - h_min  # noqa: E731
    hi = 2.0 * delta_bin
    while f(hi) < 0:
        hi *= 2
        if hi > 1e300:
            raise InputError("h_min out of reach")
    return float(optimize.brentq(f, delta_bin, hi, xtol=1e-12 * hi))


@dataclass(frozen=True)
class EntropyResult:
    delta_cd: float
    delta_bin: float
    h_min: float
    confidence: float
    h_min_lower: float
    delta_cd_lower: float
    certified: bool
    warning: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def percentile_span(values):
    lo, hi = np.percentile(np.asarray(values, float), [LO_PCT, HI_PCT])
    return float(hi - lo)


def min_entropy(s: PulseSamples, adc_bits=None, *, gof_passed=None, confidence=0.99, n_boot=1000,
                seed=0) -> EntropyResult:
    """Min-entropy per sample with ``delta_cd`` from the 0.1-99.9 percentile span.

    ``h_min_lower`` uses the lower ``1 - confidence`` bootstrap percentile of
    the span. The result is certified only if ``gof_passed`` is true.
    """
    bits = adc_bits if adc_bits is not None else s.bits
    if bits is None:
        raise InputError("adc_bits is required for real-valued samples")
    v = np.asarray(s.values)
    delta_bin = 1.0
    delta_cd = percentile_span(v)
    rng = stream_for(seed, "bootstrap")
    if np.issubdtype(v.dtype, np.integer):
        counts = np.bincount(v, minlength=2**bits).astype(float)
        levels = np.arange(counts.size, dtype=float)
        p = counts / counts.sum()
        draws = rng.multinomial(v.size, p, size=n_boot)
        spans = np.array([_percentile_int(d, levels) for d in draws])
    else:
        spans = np.array([percentile_span(rng.choice(v, v.size)) for _ in range(n_boot)])
    d_lo = float(np.percentile(spans, 100 * (1 - confidence)))
    h = min(min_entropy_from_width(delta_cd, delta_bin), float(bits))
    h_lo = min(min_entropy_from_width(d_lo, delta_bin), float(bits))
    warn = ""
    if delta_cd <= delta_bin:
        warn = "arcsine width does not exceed one ADC bin; min-entropy set to 0"
        warnings.warn(warn, RuntimeWarning, stacklevel=2)
    certified = bool(gof_passed) and not warn
    return EntropyResult(delta_cd, delta_bin, h, confidence, h_lo, d_lo, certified, warn)


def _percentile_int(counts, levels):
    # np.percentile(..., method="linear") evaluated on a histogram of integer values
    n = counts.sum()
    cum = np.cumsum(counts)

    def q(pct):
        pos = pct / 100 * (n - 1)
        k = int(math.floor(pos))
        frac = pos - k
        a = levels[np.searchsorted(cum, k + 1)]
        b = levels[np.searchsorted(cum, min(k + 2, n))]
        return a + frac * (b - a)

    return q(HI_PCT) - q(LO_PCT)
