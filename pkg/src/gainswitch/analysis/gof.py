"""Kolmogorov-Smirnov tests of pulse samples against the arcsine law.

Interference of two pulses with uniformly random relative phase gives
``I = (1 + cos U) / 2`` on ``[0, 1]`` whose CDF is ``(2/pi) asin(sqrt(x))``.

Two variants are offered.

``"percentile"``
    The samples are mapped linearly so that their 0.1 and 99.9 percentiles
    land on the matching arcsine quantiles, the trimmed tails are dropped,
    and the remainder is compared with the truncated arcsine CDF. Suited to
    noise-free real-valued data.

``"noise_aware"`` (default)
    The null is the arcsine law with unknown offset ``a`` and width ``w``,
    a lognormal spread ``c`` of the width (pulse energy fluctuation) and
    additive Gaussian noise of known rms. ``(a, w, c)`` are fitted by
    minimizing the KS distance, which makes the reported p-value
    conservative. Suited to digitized records with electronic noise.

Both run on at most ``max_samples`` evenly spaced samples: the test is a
check of distribution shape, and at 10^6 samples any model mismatch
smaller than the quantization step would dominate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from ..rng import stream_for
from ..samples import PulseSamples

__all__ = ["GofResult", "arcsine_cdf", "arcsine_gof_test"]

_TAIL = 0.001
_Q_LO = math.sin(math.pi * _TAIL / 2) ** 2

_GX, _GW = np.polynomial.hermite_e.hermegauss(24)
_GW = _GW / _GW.sum()


def arcsine_cdf(x):
    return (2.0 / np.pi) * np.arcsin(np.sqrt(np.clip(x, 0.0, 1.0)))


@dataclass(frozen=True)
class GofResult:
    statistic: float
    p_value: float
    passed: bool
    method: str
    n_used: int
    reason: str = ""
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "passed": self.passed,
            "method": self.method,
            "n_used": self.n_used,
            "reason": self.reason,
            "params": dict(self.params),
        }


def _ks(y_sorted, cdf_vals):
    m = y_sorted.size
    hi = np.arange(1, m + 1) / m - cdf_vals
    lo = cdf_vals - np.arange(m) / m
    return float(max(hi.max(), lo.max()))


def _model_cdf(x, a, w, c, s):
    """CDF of ``a + w e^{cZ1 - c^2/2} A + s Z2`` with ``A`` arcsine on [0, 1]."""
    if c > 0:
        widths, ww = w * np.exp(c * _GX - 0.5 * c * c), _GW
    else:
        widths, ww = np.array([w]), np.array([1.0])
    if s > 0:
        u = (x[:, None, None] - a - s * _GX[None, None, :]) / widths[None, :, None]
        return (arcsine_cdf(u) * ww[None, :, None] * _GW[None, None, :]).sum(axis=(1, 2))
    u = (x[:, None] - a) / widths[None, :]
    return (arcsine_cdf(u) * ww[None, :]).sum(axis=1)


def _thin(v, max_samples):
    if v.size <= max_samples:
        return v
    return v[np.linspace(0, v.size - 1, max_samples).astype(np.int64)]


def _fail(method, n, reason):
    return GofResult(float("nan"), 0.0, False, method, n, reason)


def arcsine_gof_test(s: PulseSamples, *, method="noise_aware", noise_rms=0.0, dither=True, alpha=0.01,
                     max_samples=10_000, max_spread=0.3, seed=0) -> GofResult:
    """KS test of ``s`` against an arcsine intensity law; ``passed`` iff ``p >= alpha``.

    ``noise_rms`` is the known electronic noise in the units of ``s``.
    Dithering adds U(-1/2, 1/2) to integer codes.
    """
    v = np.asarray(s.values, dtype=float)
    v = _thin(v, max_samples)
    n = v.size
    if n < 2 or np.ptp(v) == 0:
        return _fail(method, n, "degenerate input: samples are constant")
    quantized = s.bits is not None
    if dither and quantized:
        v = v + stream_for(seed, "dither").uniform(-0.5, 0.5, n)
    y = np.sort(v)
    if method == "percentile":
        lo, hi = np.percentile(y, [100 * _TAIL, 100 * (1 - _TAIL)])
        if hi <= lo:
            return _fail(method, n, "degenerate input: percentile span is zero")
        x = _Q_LO + (y - lo) / (hi - lo) * (1 - 2 * _Q_LO)
        x = x[(x >= _Q_LO) & (x <= 1 - _Q_LO)]
        cdf = (arcsine_cdf(x) - _TAIL) / (1 - 2 * _TAIL)
        d = _ks(x, cdf)
        p = float(stats.kstwo.sf(d, x.size))
        return GofResult(d, p, p >= alpha, method, int(x.size), params={"lo": float(lo), "hi": float(hi)})
    if method != "noise_aware":
        raise ValueError(f"unknown method {method!r}")
    sigma = math.sqrt(noise_rms**2 + (1.0 / 6.0 if (dither and quantized) else 0.0))
    offset = -0.5 if (dither and quantized) else 0.0
    grid = np.linspace(y[0] - 1, y[-1] + 1, 512)
    e_hi = np.arange(1, n + 1) / n
    e_lo = np.arange(n) / n

    def dist(params):
        a, w, c = params
        if w <= 0 or c < 0 or c > max_spread:
            return 1.0
        g = _model_cdf(grid, a + offset, w, c, sigma)
        f = np.interp(y, grid, g)
        return float(max((e_hi - f).max(), (f - e_lo).max()))

    p_lo, p_hi = np.percentile(y, [100 * _TAIL, 100 * (1 - _TAIL)])
    a0, w0 = p_lo - offset, max(p_hi - p_lo, 1e-9)
    best = None
    for c0 in (0.0, 0.1):
        x0 = np.array([a0, w0, c0])
        simplex = np.vstack([x0, x0 + [0.02 * w0, 0, 0], x0 + [0, 0.05 * w0, 0], x0 + [0, 0, 0.05]])
        r = optimize.minimize(dist, x0, method="Nelder-Mead",
                              options={"initial_simplex": simplex, "xatol": 1e-3, "fatol": 1e-7, "maxiter": 1500})
        if best is None or r.fun < best.fun:
            best = r
    d = float(best.fun)
    p = float(stats.kstwo.sf(d, n))
    a, w, c = (float(v) for v in best.x)
    return GofResult(d, p, p >= alpha, method, n, params={"a": a, "w": w, "c": c, "sigma": sigma})
