"""Interpulse phase read directly from a simulated field (not measurable in the lab)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InputError

__all__ = ["RayleighResult", "rayleigh_test", "PhaseResult", "pulse_peaks", "phase_ground_truth",
           "phase_differences"]


@dataclass(frozen=True)
class RayleighResult:
    mean_resultant: float
    z: float
    p_value: float
    uniform: bool


def rayleigh_test(angles, alpha=0.01) -> RayleighResult:
    """Rayleigh test of circular uniformity (large-sample p-value correction)."""
    a = np.asarray(angles, dtype=float)
    n = a.size
    if n < 2:
        raise InputError("Rayleigh test needs at least 2 angles")
    rbar = float(abs(np.exp(1j * a).mean()))
    rn = n * rbar
    z = rn * rbar
    p = math.exp(math.sqrt(1 + 4 * n + 4 * (n * n - rn * rn)) - (1 + 2 * n))
    p = min(1.0, max(0.0, p))
    return RayleighResult(rbar, z, p, p >= alpha)


def pulse_peaks(samples, samples_per_period):
    """Per-period peak intensity and field phase at that peak."""
    x = np.asarray(samples)
    m = x.size // samples_per_period
    w = x[: m * samples_per_period].reshape(m, samples_per_period)
    inten = np.abs(w) ** 2
    k = inten.argmax(axis=1)
    rows = np.arange(m)
    return inten[rows, k], np.angle(w[rows, k])


def phase_differences(peak_intensity, peak_phase, floor_frac=1e-3):
    """Wrapped differences of consecutive valid peaks and the count of skipped pulses."""
    ip = np.asarray(peak_intensity)
    ph = np.asarray(peak_phase)
    floor = floor_frac * np.median(ip)
    ok = ip > floor
    pair = ok[1:] & ok[:-1]
    d = ph[1:] - ph[:-1]
    d = np.mod(d + math.pi, 2 * math.pi) - math.pi
    return d[pair], int((~ok).sum())


@dataclass(frozen=True)
class PhaseResult:
    dphi: np.ndarray
    skipped: int
    rayleigh: RayleighResult

    @property
    def uniform(self) -> bool:
        return self.rayleigh.uniform


def phase_ground_truth(trace, rep_rate=None, floor_frac=1e-3, alpha=0.01) -> PhaseResult:
    """Consecutive-pulse phase differences at the intensity peaks and a uniformity test.

    Pulses whose peak intensity is below ``floor_frac`` times the median
    peak are skipped.
    """
    rep = trace.rep_rate if rep_rate is None else rep_rate
    spp = int(round(1.0 / (rep * trace.dt)))
    if len(trace) < 3 * spp:
        raise InputError("need at least 3 periods")
    ip, ph = pulse_peaks(trace.samples, spp)
    d, skipped = phase_differences(ip, ph, floor_frac)
    return PhaseResult(d, skipped, rayleigh_test(d, alpha))
