"""Measurement path: bandpass filter, delay interferometer, photodiode, digitizer.

Filtering is done in the frequency domain on zero-padded records. Sample
indices are absolute (``round(t0 / dt)``) so that electronic noise and
decimation phase do not depend on how a long record is split into blocks;
:class:`MeasurementChain` uses that to stream pulse trains that do not fit
in memory.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .engine import FieldTrace
from .errors import ConfigError, InputError
from .rng import indexed_normals
from .samples import PulseSamples

__all__ = [
    "IntensityTrace",
    "VoltageTrace",
    "ADCTrace",
    "ChainConfig",
    "MeasurementChain",
    "bandpass_filter",
    "amzi_interfere",
    "photodiode_detect",
    "digitize",
    "auto_full_scale",
    "sample_at_pulse_centers",
    "quadrature_trim",
    "supergaussian_response",
    "bessel_response",
    "noise_gain",
    "write_adc_csv",
    "write_adc_bytes",
    "read_adc_bytes",
]


def _frozen(a, dtype):
    a = np.asarray(a, dtype=dtype).view()
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class IntensityTrace:
    """Non-negative optical power samples on a uniform grid."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        s = _frozen(self.samples, float)
        if s.ndim != 1 or s.size == 0:
            raise InputError("IntensityTrace needs a non-empty 1-D array")
        if np.any(s < 0):
            raise InputError("IntensityTrace samples must be >= 0")
        object.__setattr__(self, "samples", s)

    @property
    def start_index(self) -> int:
        return int(round(self.t0 / self.dt))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, eq=False)
class VoltageTrace:
    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        s = _frozen(self.samples, float)
        if s.ndim != 1 or s.size == 0:
            raise InputError("VoltageTrace needs a non-empty 1-D array")
        object.__setattr__(self, "samples", s)

    @property
    def start_index(self) -> int:
        return int(round(self.t0 / self.dt))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True, eq=False)
class ADCTrace:
    """Quantized record. Code ``k`` covers ``[offset + k*vpc, offset + (k+1)*vpc)``."""

    codes: np.ndarray
    sample_rate: float
    bits: int = 8
    volts_per_code: float = 1.0
    offset: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if not 1 <= self.bits <= 16:
            raise ConfigError("bits must be in [1, 16]", ["ADCTrace.bits in [1, 16]"])
        if not self.sample_rate > 0:
            raise ConfigError("sample_rate must be > 0", ["ADCTrace.sample_rate > 0"])
        c = np.asarray(self.codes)
        if c.ndim != 1:
            raise InputError("ADCTrace codes must be 1-D")
        if c.size and (c.min() < 0 or c.max() >= 2**self.bits):
            raise InputError("ADC codes outside range")
        object.__setattr__(self, "codes", _frozen(c, np.uint8 if self.bits <= 8 else np.uint16))

    def volts(self) -> np.ndarray:
        """Bin-centre reconstruction of the input voltage."""
        return self.offset + (self.codes + 0.5) * self.volts_per_code

    def __len__(self):
        return self.codes.size


# ---------------------------------------------------------------- filter shapes


def supergaussian_response(f, bandwidth, center=0.0, order=4):
    """Real passband, -3 dB (power) at ``center +- bandwidth/2``."""
    u = 2.0 * (np.asarray(f, float) - center) / bandwidth
    return np.exp(-(math.log(2.0) / 2.0) * u ** (2 * order))


@lru_cache(maxsize=32)
def _bessel_coeffs(bandwidth, order):
    b, a = signal.bessel(order, 2 * math.pi * bandwidth, analog=True, norm="mag")
    # DC group delay of b/a with constant b
    tau = a[-2] / a[-1]
    return b, a, tau


def bessel_response(f, bandwidth, order=4):
    """Bessel low-pass, -3 dB at ``bandwidth``, with its DC group delay removed."""
    b, a, tau = _bessel_coeffs(float(bandwidth), int(order))
    w = 2 * math.pi * np.asarray(f, float)
    _, h = signal.freqs(b, a, worN=w)
    return h * np.exp(1j * w * tau)


@lru_cache(maxsize=32)
def noise_gain(bandwidth, dt, order=4, n=1 << 16):
    """Variance gain of white noise sampled at ``dt`` through the Bessel low-pass."""
    f = np.fft.fftfreq(n, dt)
    return float(np.mean(np.abs(bessel_response(f, bandwidth, order)) ** 2))


def _apply(x, dt, response, guard=1024, cache=None):
    """Linear filtering of ``x`` by ``response(f)`` with zero padding.

    ``cache`` (a dict) memoizes the sampled response per FFT length.
    """
    n = x.size
    m = sfft.next_fast_len(n + min(n, guard))
    real = not np.iscomplexobj(x)
    key = (m, real)
    H = None if cache is None else cache.get(key)
    if H is None:
        H = response(sfft.rfftfreq(m, dt) if real else sfft.fftfreq(m, dt))
        if cache is not None:
            cache[key] = H
    if real:
        return sfft.irfft(sfft.rfft(x, m) * H, m)[:n]
    return sfft.ifft(sfft.fft(x, m) * H)[:n]


# ---------------------------------------------------------------- stages


def _check_bandpass(dt, center_offset, bandwidth):
    issues = []
    if not bandwidth > 0:
        issues.append("bandpass bandwidth must be > 0")
    elif bandwidth >= 1.0 / dt:
        issues.append(f"bandpass bandwidth {bandwidth:g} Hz exceeds the representable band {1.0 / dt:g} Hz")
    if abs(center_offset) >= 0.5 / dt:
        issues.append("bandpass center_offset outside the representable band")
    if issues:
        raise ConfigError("; ".join(issues), issues)


def bandpass_filter(trace: FieldTrace, center_offset=0.0, bandwidth=50e9, order=4) -> FieldTrace:
    """Super-Gaussian optical bandpass around ``center_offset`` from the carrier."""
    _check_bandpass(trace.dt, center_offset, bandwidth)
    y = _apply(trace.samples, trace.dt, lambda f: supergaussian_response(f, bandwidth, center_offset, order))
    return FieldTrace(y, trace.dt, trace.t0, trace.rep_rate, dict(trace.meta))


def _interfere(x, d, phase_trim, arm_transmission=1.0):
    delayed = math.sqrt(arm_transmission) * np.exp(1j * phase_trim) * x[:-d]
    return 0.25 * np.abs(x[d:] + delayed) ** 2


def amzi_interfere(trace: FieldTrace, delay=None, phase_trim=0.0, arm_transmission=1.0) -> IntensityTrace:
    """Delay-line interference ``|E(t) + exp(i trim) E(t - delay)|^2 / 4``.

    ``delay`` defaults to one drive period and must be a whole number of
    samples. The first ``delay`` of output is dropped.
    """
    if delay is None:
        d = trace.samples_per_period
    else:
        d = int(round(delay / trace.dt))
        if d < 1 or abs(d * trace.dt - delay) > 1e-6 * trace.dt:
            raise ConfigError("AMZI delay must be a positive integer multiple of dt",
                              ["amzi delay integer multiple of dt"])
    if not 0 <= arm_transmission <= 1:
        raise ConfigError("arm_transmission must be in [0, 1]", ["amzi arm_transmission in [0, 1]"])
    if len(trace) <= d:
        raise InputError("trace shorter than the interferometer delay")
    out = _interfere(trace.samples, d, phase_trim, arm_transmission)
    return IntensityTrace(out, trace.dt, trace.t0 + d * trace.dt)


def quadrature_trim(x, d) -> float:
    """Trim phase that centres the average interpulse phase on the fringe slope."""
    c = np.vdot(x[:-d], x[d:])  # sum E(t) conj(E(t-d))
    return float(np.angle(c) - math.pi / 2) if c != 0 else 0.0


def photodiode_detect(trace: IntensityTrace, bandwidth=40e9, noise_rms=0.0, *, responsivity=1.0, order=4,
                      seed=0, stream_base=0) -> VoltageTrace:
    """Low-pass detection plus white electronic noise of rms ``noise_rms``.

    Noise at absolute sample ``i`` is the same variate in every call with
    the same ``seed``/``stream_base``.
    """
    if not bandwidth > 0:
        raise ConfigError("photodiode bandwidth must be > 0", ["photodiode bandwidth > 0"])
    if noise_rms < 0:
        raise ConfigError("noise_rms must be >= 0", ["noise_rms >= 0"])
    v = responsivity * _apply(trace.samples, trace.dt, lambda f: bessel_response(f, bandwidth, order))
    if noise_rms > 0:
        i0 = trace.start_index
        v = v + noise_rms * indexed_normals(seed, "electronic", i0, i0 + v.size, stream_base)
    return VoltageTrace(v, trace.dt, trace.t0)


def _parse_full_scale(full_scale):
    if np.ndim(full_scale) == 0:
        lo, hi = 0.0, float(full_scale)
    else:
        lo, hi = (float(v) for v in full_scale)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi - lo <= 0:
        raise ConfigError("full_scale must be a positive range", ["full_scale range must be > 0"])
    return lo, hi


def _decimation(dt, sample_rate):
    if not sample_rate > 0:
        raise ConfigError("sample_rate must be > 0", ["sample_rate > 0"])
    ratio = 1.0 / (sample_rate * dt)
    dec = int(round(ratio))
    if dec < 1 or abs(dec - ratio) > 1e-6 * ratio:
        raise ConfigError(
            f"sample_rate {sample_rate:g} must be the input rate {1 / dt:g} divided by an integer",
            ["digitizer performs integer decimation only"])
    return dec


def _quantize(v, lo, vpc, bits):
    q = np.floor((v - lo) / vpc)
    np.clip(q, 0, 2**bits - 1, out=q)
    return q.astype(np.uint8 if bits <= 8 else np.uint16)


def digitize(trace: VoltageTrace, sample_rate=80e9, bits=8, full_scale=(0.0, 1.0), lowpass=None,
             order=4) -> ADCTrace:
    """Optional scope low-pass, integer decimation, clipping and uniform quantization.

    ``full_scale`` is ``(lo, hi)`` or a scalar ``hi`` meaning ``(0, hi)``.
    Output sample ``j`` sits at absolute input index ``j * decimation``.
    """
    if not 1 <= int(bits) <= 16:
        raise ConfigError("bits must be in [1, 16]", ["digitize bits in [1, 16]"])
    bits = int(bits)
    lo, hi = _parse_full_scale(full_scale)
    dec = _decimation(trace.dt, sample_rate)
    v = trace.samples
    if lowpass:
        v = _apply(v, trace.dt, lambda f: bessel_response(f, lowpass, order))
    i0 = trace.start_index
    first = (-i0) % dec
    v = v[first::dec]
    vpc = (hi - lo) / 2**bits
    t0 = (i0 + first) * trace.dt
    return ADCTrace(_quantize(v, lo, vpc, bits), sample_rate, bits, vpc, lo, t0)


def auto_full_scale(volts, lo_pct=0.1, hi_pct=99.9, headroom=0.1):
    """ADC range from calibration percentiles widened by ``headroom`` of the span."""
    lo, hi = np.percentile(np.asarray(volts, float), [lo_pct, hi_pct])
    span = hi - lo
    if not span > 0:
        raise InputError("calibration record has no spread")
    return float(lo - headroom * span), float(hi + headroom * span)


def sample_at_pulse_centers(adc: ADCTrace, rep_rate, offset=None) -> PulseSamples:
    """One code per period at ``k / rep_rate + offset`` (nearest ADC sample).

    With ``offset=None`` every ADC grid phase within a period is tried and
    the one with the largest variance across pulses is used.
    """
    n = len(adc)
    period = 1.0 / rep_rate
    if n * (1.0 / adc.sample_rate) < 2 * period:
        raise InputError("fewer than 2 periods in the ADC record")
    fs = adc.sample_rate
    spp = fs * period

    def indices(off):
        k0 = math.ceil((adc.t0 - off) * rep_rate - 1e-9)
        k1 = math.floor((adc.t0 + (n - 0.5) / fs - off) * rep_rate + 1e-9)
        k = np.arange(k0, k1 + 1)
        idx = np.rint((k * period + off - adc.t0) * fs).astype(np.int64)
        return idx[(idx >= 0) & (idx < n)]

    codes = adc.codes
    if offset is None:
        best, best_var = 0.0, -1.0
        for j in range(int(math.ceil(spp - 1e-9))):
            off = j / fs
            var = float(np.var(codes[indices(off)].astype(float)))
            if var > best_var:
                best, best_var = off, var
        offset = best
    elif not 0 <= offset < period:
        raise InputError("offset must lie in [0, 1/rep_rate)")
    vals = codes[indices(offset)].astype(np.int64)
    return PulseSamples(vals, rep_rate, adc.bits, float(offset))


# ---------------------------------------------------------------- export


def write_adc_csv(adc: ADCTrace, path):
    path = Path(path)
    idx = np.arange(len(adc))
    np.savetxt(path, np.column_stack([idx, adc.codes]), fmt="%d", delimiter=",", header="index,code",
               comments="")
    return path


def write_adc_bytes(adc: ADCTrace, path, provenance=None):
    """Raw codes (one byte each, two little-endian bytes above 8 bits) plus ``path.json``."""
    path = Path(path)
    adc.codes.astype("<u2" if adc.bits > 8 else "u1").tofile(path)
    side = {
        "sample_rate": adc.sample_rate,
        "bits": adc.bits,
        "volts_per_code": adc.volts_per_code,
        "offset": adc.offset,
        "t0": adc.t0,
        "n_samples": len(adc),
        "provenance": provenance or {},
    }
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))
    return path


def read_adc_bytes(path) -> ADCTrace:
    path = Path(path)
    side = json.loads(Path(str(path) + ".json").read_text())
    codes = np.fromfile(path, dtype="<u2" if side["bits"] > 8 else "u1")
    return ADCTrace(codes, side["sample_rate"], side["bits"], side["volts_per_code"], side["offset"], side["t0"])


# ---------------------------------------------------------------- streaming chain


@dataclass(frozen=True)
class ChainConfig:
    """Settings of the measurement path.

    ``None`` for ``amzi_phase_trim``, ``full_scale`` or ``sample_offset``
    selects calibration from the first block of the record.
    ``noise_codes`` is the electronic noise rms referred to the ADC input.
    """

    bandpass_bandwidth: float = 50e9
    bandpass_center: float = 0.0
    bandpass_order: int = 4
    amzi_phase_trim: float | None = None
    amzi_arm_transmission: float = 1.0
    pd_bandwidth: float = 40e9
    responsivity: float = 1.0
    noise_codes: float = 2.0
    scope_bandwidth: float = 33e9
    lowpass_order: int = 4
    adc_rate: float = 80e9
    adc_bits: int = 8
    full_scale: tuple | None = None
    headroom: float = 0.1
    sample_offset: float | None = None
    calibration_pulses: int = 4096
    margin_time: float = 1e-9

    def __post_init__(self):
        issues = []
        for name in ("bandpass_bandwidth", "pd_bandwidth", "scope_bandwidth", "adc_rate", "responsivity",
                     "margin_time"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                issues.append(f"ChainConfig invariant violated: {name} > 0")
        if not 0 <= self.amzi_arm_transmission <= 1:
            issues.append("ChainConfig invariant violated: amzi_arm_transmission in [0, 1]")
        if not self.noise_codes >= 0:
            issues.append("ChainConfig invariant violated: noise_codes >= 0")
        if not 1 <= self.adc_bits <= 16:
            issues.append("ChainConfig invariant violated: adc_bits in [1, 16]")
        if not 0 <= self.headroom < 1:
            issues.append("ChainConfig invariant violated: headroom in [0, 1)")
        if self.calibration_pulses < 16:
            issues.append("ChainConfig invariant violated: calibration_pulses >= 16")
        if self.full_scale is not None:
            try:
                _parse_full_scale(self.full_scale)
            except ConfigError as e:
                issues.extend(e.issues)
        if issues:
            raise ConfigError("; ".join(issues), issues)

    def to_dict(self):
        return asdict(self)


@dataclass
class Calibration:
    phase_trim: float
    full_scale: tuple
    volts_per_code: float
    noise_rms: float
    offset_index: int
    extra: dict = field(default_factory=dict)


class MeasurementChain:
    """Block-wise bandpass, AMZI, photodiode, scope and ADC.

    :meth:`calibrate` consumes the first field block: it fixes the trim
    phase, ADC range, noise level and sampling phase, and seeds the history
    buffer. Each :meth:`feed` then returns ADC codes shaped
    ``(periods, adc_samples_per_period)`` for every period whose filter
    support is complete. Output lags the input by the filter margin.
    """

    def __init__(self, cfg: ChainConfig, rep_rate, dt, seed=0, stream_base=0):
        self.cfg = cfg
        self.rep_rate = rep_rate
        self.dt = dt
        self.seed = seed
        self.stream_base = stream_base
        self.spp = int(round(1.0 / (rep_rate * dt)))
        if abs(self.spp * rep_rate * dt - 1) > 1e-9:
            raise ConfigError("record dt must divide the drive period", ["dt divides period"])
        _check_bandpass(dt, cfg.bandpass_center, cfg.bandpass_bandwidth)
        self.dec = _decimation(dt, cfg.adc_rate)
        if self.spp % self.dec:
            raise ConfigError("ADC samples per period must be an integer", ["adc_rate / rep_rate integer"])
        self.adc_spp = self.spp // self.dec
        self.margin = int(math.ceil(cfg.margin_time / dt))
        self.cal: Calibration | None = None
        self._cache = {"bp": {}, "pd": {}, "scope": {}}
        self._buf = None
        self._buf_start = 0
        self._next_period = 0

    @property
    def lag_pulses(self) -> int:
        """Trailing pulses that must be fed after the last wanted period."""
        return -(-self.margin // self.spp) + 1

    def _bandpass(self, x):
        c = self.cfg
        return _apply(x, self.dt, lambda f: supergaussian_response(f, c.bandpass_bandwidth, c.bandpass_center,
                                                                   c.bandpass_order), cache=self._cache["bp"])

    def _optical(self, x, trim):
        return _interfere(self._bandpass(x), self.spp, trim, self.cfg.amzi_arm_transmission)

    def _electrical(self, intensity, start, noise_rms):
        c = self.cfg
        v = c.responsivity * _apply(intensity, self.dt, lambda f: bessel_response(f, c.pd_bandwidth, c.lowpass_order),
                                    cache=self._cache["pd"])
        if noise_rms > 0:
            v += noise_rms * indexed_normals(self.seed, "electronic", start, start + v.size, self.stream_base)
        return _apply(v, self.dt, lambda f: bessel_response(f, c.scope_bandwidth, c.lowpass_order),
                      cache=self._cache["scope"])

    def _periods(self, v, v_start, p0, p1):
        """Decimated voltages for periods ``[p0, p1)`` shaped (periods, adc_spp)."""
        a = p0 * self.spp - v_start
        seg = v[a:a + (p1 - p0) * self.spp]
        return seg[::self.dec].reshape(p1 - p0, self.adc_spp)

    def _valid_periods(self, start, length):
        lo = start + self.spp + self.margin
        hi = start + length - self.margin
        return -(-lo // self.spp), hi // self.spp

    def calibrate(self, block: FieldTrace) -> Calibration:
        c = self.cfg
        x = np.asarray(block.samples)
        start = block.start_index
        p0, p1 = self._valid_periods(start, x.size)
        if p1 - p0 < 16:
            raise InputError("calibration block too short")
        bp = self._bandpass(x)
        trim = quadrature_trim(bp, self.spp) if c.amzi_phase_trim is None else float(c.amzi_phase_trim)
        inten = _interfere(bp, self.spp, trim, c.amzi_arm_transmission)
        v_start = start + self.spp
        clean = self._periods(self._electrical(inten, v_start, 0.0), v_start, p0, p1)
        lo, hi = auto_full_scale(clean, headroom=c.headroom) if c.full_scale is None else _parse_full_scale(c.full_scale)
        vpc = (hi - lo) / 2**c.adc_bits
        noise_rms = c.noise_codes * vpc / math.sqrt(noise_gain(c.scope_bandwidth, self.dt, c.lowpass_order))
        self.cal = Calibration(trim, (lo, hi), vpc, noise_rms, 0)
        codes = _quantize(self._periods(self._electrical(inten, v_start, noise_rms), v_start, p0, p1),
                          lo, vpc, c.adc_bits)
        if c.sample_offset is None:
            off = int(np.argmax(codes.astype(float).var(axis=0)))
        else:
            off = int(round(c.sample_offset * c.adc_rate)) % self.adc_spp
        self.cal.offset_index = off
        self._buf = x[max(0, x.size - self.spp - 2 * self.margin - self.spp):].copy()
        self._buf_start = start + x.size - self._buf.size
        self._next_period = (start + x.size) // self.spp
        return self.cal

    def feed(self, block: FieldTrace):
        """Append a contiguous field block; returns ``(first_period, codes)``."""
        if self.cal is None:
            raise InputError("calibrate the chain before feeding data")
        start = block.start_index
        if start != self._buf_start + self._buf.size:
            raise InputError("field blocks must be contiguous")
        x = np.concatenate([self._buf, block.samples])
        s = self._buf_start
        _, p1 = self._valid_periods(s, x.size)
        p0 = self._next_period
        cal = self.cal
        codes = np.empty((0, self.adc_spp), np.uint8 if self.cfg.adc_bits <= 8 else np.uint16)
        if p1 > p0:
            inten = self._optical(x, cal.phase_trim)
            v = self._electrical(inten, s + self.spp, cal.noise_rms)
            codes = _quantize(self._periods(v, s + self.spp, p0, p1), cal.full_scale[0], cal.volts_per_code,
                              self.cfg.adc_bits)
            self._next_period = p1
        keep_from = self._next_period * self.spp - self.spp - self.margin
        cut = max(0, keep_from - s)
        self._buf = x[cut:]
        self._buf_start = s + cut
        return p0, codes

    def adc_trace(self, codes, first_period) -> ADCTrace:
        """Wrap a ``feed`` result as a flat ADC record."""
        cal = self.cal
        t0 = first_period / self.rep_rate
        return ADCTrace(np.asarray(codes).ravel(), self.cfg.adc_rate, self.cfg.adc_bits, cal.volts_per_code,
                        cal.full_scale[0], t0)
