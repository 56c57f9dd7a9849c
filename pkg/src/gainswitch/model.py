"""Device parameters and closed-form phase-diffusion relations.

Everything here is a pure function of its arguments. The relations are the
analytic layer that the stochastic engine is checked against:

* below-threshold Schawlow-Townes linewidth ``R / (2 pi S)``
* phase-diffusion constant ``pi * linewidth`` and variance ``2 pi linewidth t``
* cavity resonance width ``1 / (2 pi tau_p)``
* flat-top estimate of the ASE power that falls inside that resonance
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import constants as _sc

from .errors import ConfigError, DomainError

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "LaserParams",
    "ASESource",
    "DriveWaveform",
    "DFB_1550",
    "schawlow_townes_linewidth",
    "phase_diffusion_constant",
    "phase_variance",
    "cavity_resonance_width",
    "frequency_to_wavelength_width",
    "in_band_ase_power",
    "ase_photon_rate",
    "effective_spontaneous_rate",
    "coupled_ase_rate",
]


@dataclass(frozen=True)
class PhysicalConstants:
    h: float = _sc.h
    c: float = _sc.c


CONSTANTS = PhysicalConstants()


def _check(cond, issue):
    if not cond:
        raise ConfigError(issue, [issue])


@dataclass(frozen=True)
class LaserParams:
    """Single-mode rate-equation parameters.

    Carrier and photon variables are dimensionless counts, so ``g0`` is the
    stimulated-emission rate per carrier above transparency (1/s).

    ``freq_noise_rms`` (Hz) and ``freq_noise_time`` (s) describe slow
    technical frequency wander of the free-running laser as an
    Ornstein-Uhlenbeck detuning. It only shows up in interference when
    consecutive pulses share a phase reference; set the rms to 0 to remove it.
    """

    tau_p: float = 1e-12
    tau_n: float = 1e-9
    beta_sp: float = 1e-5
    g0: float = 2e5
    N_tr: float = 5e6
    eps_sat: float = 1e-5
    alpha_h: float = 3.0
    lambda_c: float = 1550e-9
    freq_noise_rms: float = 20e6
    freq_noise_time: float = 10e-9

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            _check(math.isfinite(getattr(self, name)), f"LaserParams.{name} must be finite")
        _check(self.freq_noise_rms >= 0, "LaserParams invariant violated: freq_noise_rms >= 0")
        _check(self.freq_noise_time > 0, "LaserParams invariant violated: freq_noise_time > 0")
        _check(self.tau_p > 0, "LaserParams invariant violated: tau_p > 0")
        _check(self.tau_n > 0, "LaserParams invariant violated: tau_n > 0")
        _check(0 < self.beta_sp <= 1, "LaserParams invariant violated: beta_sp in (0, 1]")
        _check(self.g0 > 0, "LaserParams invariant violated: g0 > 0")
        _check(self.N_tr > 0, "LaserParams invariant violated: N_tr > 0")
        _check(self.eps_sat >= 0, "LaserParams invariant violated: eps_sat >= 0")
        _check(self.lambda_c > 0, "LaserParams invariant violated: lambda_c > 0")

    @property
    def n_threshold(self) -> float:
        """Carrier number at which modal gain equals cavity loss."""
        return self.N_tr + 1.0 / (self.g0 * self.tau_p)

    @property
    def pump_threshold(self) -> float:
        """Pump rate (carriers/s) that holds the carriers at threshold."""
        return self.n_threshold / self.tau_n

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ASESource:
    """Broadband ASE source with a flat-top spectrum over its 3 dB band.

    ``coupling_efficiency`` is the external path loss into the laser facet;
    ``mode_coupling`` is the further fraction of in-band photons that ends
    up in the lasing mode. The latter is not known for any real device.
    """

    total_power: float = 0.0
    center_wavelength: float = 1550e-9
    bandwidth_3db: float = 33e-9
    coupling_efficiency: float = 1.0
    mode_coupling: float = 0.1

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            _check(math.isfinite(getattr(self, name)), f"ASESource.{name} must be finite")
        _check(self.total_power >= 0, "ASESource invariant violated: total_power >= 0")
        _check(self.center_wavelength > 0, "ASESource invariant violated: center_wavelength > 0")
        _check(self.bandwidth_3db > 0, "ASESource invariant violated: bandwidth_3db > 0")
        _check(0 <= self.coupling_efficiency <= 1,
               "ASESource invariant violated: coupling_efficiency in [0, 1]")
        _check(0 <= self.mode_coupling <= 1, "ASESource invariant violated: mode_coupling in [0, 1]")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DriveWaveform:
    """Periodic square pump with logistic edges.

    ``i_high`` and ``i_low`` are pump rates in carriers/s. ``rise_time`` is
    the 10-90 % edge duration; zero gives ideal square edges.
    """

    rep_rate: float = 1e9
    duty_cycle: float = 0.5
    i_high: float = 2e17
    i_low: float = 0.0
    rise_time: float = 20e-12

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            _check(math.isfinite(getattr(self, name)), f"DriveWaveform.{name} must be finite")
        _check(self.rep_rate > 0, "DriveWaveform invariant violated: rep_rate > 0")
        _check(0 < self.duty_cycle < 1, "DriveWaveform invariant violated: duty_cycle in (0, 1)")
        _check(self.i_high > self.i_low >= 0, "DriveWaveform invariant violated: i_high > i_low >= 0")
        _check(self.rise_time >= 0, "DriveWaveform invariant violated: rise_time >= 0")

    @property
    def period(self) -> float:
        return 1.0 / self.rep_rate

    def envelope(self, t):
        """Normalized drive level in [0, 1] at times ``t`` (s)."""
        t = np.asarray(t, dtype=float)
        T = self.period
        x = np.mod(t, T)
        high = self.duty_cycle * T
        if self.rise_time == 0:
            return (x < high).astype(float)
        # logistic with 10-90 % time equal to rise_time
        scale = self.rise_time / (2.0 * math.log(9.0))

        def sig(u):
            return 0.5 * (1.0 + np.tanh(u / (2.0 * scale)))

        w = np.zeros_like(x)
        for k in (-1, 0, 1):
            u = x - k * T
            w += sig(u) - sig(u - high)
        return np.clip(w, 0.0, 1.0)

    def pump(self, t):
        """Pump rate (carriers/s) at times ``t``."""
        return self.i_low + (self.i_high - self.i_low) * self.envelope(t)

    def to_dict(self):
        return asdict(self)


# Representative 1550 nm DFB. Only tau_p is anchored to a measured value;
# the rest are typical single-mode values chosen to give an ~18 GHz class
# modulation response at 10x threshold pumping.
DFB_1550 = LaserParams()


def _finite(*values):
    return all(math.isfinite(v) for v in values)


def schawlow_townes_linewidth(r_sp: float, s: float) -> float:
    """Linewidth (Hz) from the spontaneous coupling rate and photon number."""
    if not _finite(r_sp, s):
        raise DomainError("schawlow_townes_linewidth: non-finite input")
    if s <= 0:
        raise DomainError("schawlow_townes_linewidth: photon number must be > 0")
    if r_sp < 0:
        raise DomainError("schawlow_townes_linewidth: r_sp must be >= 0")
    return r_sp / (2.0 * math.pi * s)


def phase_diffusion_constant(linewidth: float) -> float:
    """Phase-diffusion constant (rad^2/s) for a Lorentzian linewidth (Hz)."""
    if not math.isfinite(linewidth) or linewidth < 0:
        raise DomainError("phase_diffusion_constant: linewidth must be finite and >= 0")
    return math.pi * linewidth


def phase_variance(linewidth: float, t: float) -> float:
    """Accumulated phase variance (rad^2) after time ``t``."""
    if not _finite(linewidth, t) or linewidth < 0 or t < 0:
        raise DomainError("phase_variance: inputs must be finite and >= 0")
    return 2.0 * math.pi * linewidth * t


def cavity_resonance_width(tau_p: float) -> float:
    """Full width (Hz) of the cold-cavity resonance for photon lifetime ``tau_p``."""
    if not math.isfinite(tau_p) or tau_p <= 0:
        raise DomainError("cavity_resonance_width: tau_p must be finite and > 0")
    return 1.0 / (2.0 * math.pi * tau_p)


def frequency_to_wavelength_width(width_hz: float, wavelength: float) -> float:
    """Convert a small optical frequency interval to a wavelength interval (m)."""
    if not _finite(width_hz, wavelength) or wavelength <= 0 or width_hz < 0:
        raise DomainError("frequency_to_wavelength_width: invalid input")
    return wavelength**2 * width_hz / CONSTANTS.c


def in_band_ase_power(src: ASESource, cavity_width_hz: float) -> float:
    """ASE power (W) that overlaps the cavity resonance, flat-top spectrum."""
    if not math.isfinite(cavity_width_hz) or cavity_width_hz <= 0:
        raise DomainError("in_band_ase_power: cavity_width_hz must be finite and > 0")
    dlam = src.center_wavelength**2 * cavity_width_hz / CONSTANTS.c
    fraction = min(1.0, dlam / src.bandwidth_3db)
    return src.total_power * src.coupling_efficiency * fraction


def ase_photon_rate(p_in_band: float, wavelength: float) -> float:
    """Photon flux (1/s) carried by optical power ``p_in_band`` at ``wavelength``."""
    if not _finite(p_in_band, wavelength) or p_in_band < 0 or wavelength <= 0:
        raise DomainError("ase_photon_rate: power must be >= 0 and wavelength > 0")
    return p_in_band * wavelength / (CONSTANTS.h * CONSTANTS.c)


def effective_spontaneous_rate(r_sp: float, r_ase: float) -> float:
    if not _finite(r_sp, r_ase) or r_sp < 0 or r_ase < 0:
        raise DomainError("effective_spontaneous_rate: rates must be finite and >= 0")
    return r_sp + r_ase


def coupled_ase_rate(src: ASESource, laser: LaserParams) -> float:
    """Photon rate (1/s) that the ASE source adds to the lasing-mode noise.

    Chains resonance width -> in-band power -> photon flux -> mode coupling.
    """
    width = cavity_resonance_width(laser.tau_p)
    p = in_band_ase_power(src, width)
    return ase_photon_rate(p, src.center_wavelength) * src.mode_coupling
