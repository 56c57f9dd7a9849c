"""Pulse timing jitter from rising-edge threshold crossings."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InputError

__all__ = ["JitterResult", "JitterAccumulator", "edge_crossings", "timing_jitter"]


@dataclass(frozen=True)
class JitterResult:
    rms: float
    n_pulses: int
    n_failed: int
    mean_time: float


def edge_crossings(windows, threshold_frac):
    """Fractional index of the rising ``threshold_frac * peak`` crossing per row.

    Rows that never dip below threshold before their peak give NaN.
    """
    w = np.asarray(windows, dtype=float)
    n, m = w.shape
    rows = np.arange(n)
    pk = w.argmax(axis=1)
    thr = threshold_frac * w[rows, pk]
    col = np.arange(m)[None, :]
    cand = (w < thr[:, None]) & (col < pk[:, None])
    ok = cand.any(axis=1) & (thr > 0)
    last = m - 1 - np.argmax(cand[:, ::-1], axis=1)
    nxt = np.minimum(last + 1, m - 1)
    a, b = w[rows, last], w[rows, nxt]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(b > a, (thr - a) / (b - a), 0.0)
    out = last + frac
    out[~ok] = np.nan
    return out


class JitterAccumulator:
    """Collects crossing times block by block.

    Windows span one period centred on the mean pulse position, which is
    fixed from the first block.
    """

    def __init__(self, dt, samples_per_period, threshold_frac=0.5):
        if not 0 < threshold_frac < 1:
            raise InputError("threshold_frac must be in (0, 1)")
        self.dt = dt
        self.spp = int(samples_per_period)
        self.frac = threshold_frac
        self.shift = None
        self._times = []
        self.n_failed = 0

    def add(self, intensity, start_index):
        x = np.asarray(intensity, dtype=float)
        spp = self.spp
        if self.shift is None:
            head = (-start_index) % spp
            m = (x.size - head) // spp
            if m < 1:
                raise InputError("block shorter than one period")
            prof = x[head:head + m * spp].reshape(m, spp).mean(axis=0)
            self.shift = (int(np.argmax(prof)) - spp // 2) % spp
        first = (self.shift - start_index) % spp
        m = (x.size - first) // spp
        if m < 1:
            return
        win = x[first:first + m * spp].reshape(m, spp)
        idx = edge_crossings(win, self.frac)
        bad = np.isnan(idx)
        self.n_failed += int(bad.sum())
        base = start_index + first + spp * np.arange(m)
        self._times.append(((base + idx) * self.dt)[~bad])

    def result(self, rep_rate, max_fail=0.01) -> JitterResult:
        t = np.concatenate(self._times) if self._times else np.empty(0)
        total = t.size + self.n_failed
        if total < 100:
            raise InputError("timing jitter needs at least 100 pulses")
        if self.n_failed > max_fail * total:
            raise InputError(f"{self.n_failed} of {total} pulses never crossed the threshold")
        period = 1.0 / rep_rate
        theta = 2 * math.pi * np.mod(t, period) / period
        mu = float(np.angle(np.exp(1j * theta).mean()))
        dev = np.angle(np.exp(1j * (theta - mu))) * period / (2 * math.pi)
        return JitterResult(float(dev.std()), int(total), self.n_failed, (mu % (2 * math.pi)) * period / (2 * math.pi))


def timing_jitter(trace, rep_rate, threshold_frac=0.5) -> JitterResult:
    """RMS pulse timing jitter of an intensity trace (seconds in ``.rms``)."""
    spp = int(round(1.0 / (rep_rate * trace.dt)))
    acc = JitterAccumulator(trace.dt, spp, threshold_frac)
    acc.add(trace.samples, trace.start_index)
    return acc.result(rep_rate)
