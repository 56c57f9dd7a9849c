"""Stochastic single-mode rate equations for a gain-switched laser.

State is the complex intracavity field ``E`` (sqrt(photons), ``|E|^2 = S``)
and the carrier count ``N``. One step advances::

    G  = g0 (N - N_tr) / (1 + eps_sat |E|^2)
    dE = [ (1 + i alpha_h)(G - 1/tau_p)/2 + i dw ] E dt + dW
    dN = (pump - N/tau_n - G |E|^2) dt

``dW`` is circular complex Gaussian with ``<|dW|^2> = (R_sp + R_ase) dt``
and ``R_sp = beta_sp N / tau_n``. The intrinsic and injected contributions
are independent, so their sum is drawn as a single complex variate.
``dw`` is the slow technical detuning, refreshed once per drive period.
The carrier count is clamped at zero.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConfigError, IntegratorDivergence
from .model import ASESource, DriveWaveform, LaserParams, coupled_ase_rate
from .rng import make_noise_stream, stream_for

log = logging.getLogger(__name__)

__all__ = [
    "SimState",
    "IntegratorConfig",
    "FieldTrace",
    "step",
    "PulseTrainSimulator",
    "simulate_pulse_train",
    "pure_phase_diffusion_reference",
    "make_noise_stream",
    "save_trace",
    "load_trace",
]

SCHEMES = ("euler_maruyama", "stochastic_heun")


@dataclass(frozen=True)
class SimState:
    e_field: complex = 0j
    n_carriers: float = 0.0
    t: float = 0.0
    detuning: float = 0.0  # rad/s

    @property
    def photons(self):
        return np.abs(self.e_field) ** 2


@dataclass(frozen=True)
class IntegratorConfig:
    """Time stepping and recording options.

    ``record_every`` averages that many consecutive steps into one stored
    sample, so the stored trace has spacing ``dt * record_every``.
    """

    dt: float = 0.25e-12
    n_pulses: int = 1000
    scheme: str = "euler_maruyama"
    seed: int = 0
    burn_in_pulses: int = 16
    record_every: int = 1
    stream_base: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("IntegratorConfig invariant violated: dt > 0", ["dt > 0"])
        if self.n_pulses < 1:
            raise ConfigError("IntegratorConfig invariant violated: n_pulses >= 1", ["n_pulses >= 1"])
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}", [f"scheme must be one of {SCHEMES}"])
        if self.burn_in_pulses < 0 or self.record_every < 1:
            raise ConfigError("IntegratorConfig: burn_in_pulses >= 0 and record_every >= 1 required")

    def steps_per_period(self, rep_rate: float) -> int:
        """Integer number of steps per drive period; rejects inconsistent grids."""
        period = 1.0 / rep_rate
        ratio = period / self.dt
        n = int(round(ratio))
        if n < 200:
            raise ConfigError(
                f"dt too coarse: {n} steps per period, need >= 200",
                ["IntegratorConfig invariant violated: dt <= (1/rep_rate)/200"],
            )
        if abs(ratio - n) > 1e-6 * n:
            raise ConfigError("drive period is not an integer multiple of dt", ["period/dt must be an integer"])
        if n % self.record_every:
            raise ConfigError("record_every must divide the steps per period", ["record_every divides period"])
        return n


@dataclass(frozen=True, eq=False)
class FieldTrace:
    """Uniformly sampled complex field envelope (sqrt(photons))."""

    samples: np.ndarray
    dt: float
    t0: float
    rep_rate: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("FieldTrace samples must be a non-empty 1-D array")
        s = s.view()
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def samples_per_period(self) -> int:
        return int(round(1.0 / (self.rep_rate * self.dt)))

    @property
    def n_pulses(self) -> int:
        return self.samples.size // self.samples_per_period

    @property
    def start_index(self) -> int:
        """Absolute sample index of the first sample on this trace's grid."""
        return int(round(self.t0 / self.dt))

    def pulses(self) -> np.ndarray:
        """View shaped ``(n_pulses, samples_per_period)``."""
        m = self.samples_per_period
        n = self.samples.size // m
        return self.samples[: n * m].reshape(n, m)

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def __eq__(self, other):
        if not isinstance(other, FieldTrace):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.t0 == other.t0
            and self.rep_rate == other.rep_rate
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


def concat_traces(traces):
    traces = list(traces)
    first = traces[0]
    data = np.concatenate([t.samples for t in traces])
    return FieldTrace(data, first.dt, first.t0, first.rep_rate, dict(first.meta))


# ---------------------------------------------------------------- reference step


def _drift(E, N, p: LaserParams, pump, detuning):
    S = np.abs(E) ** 2
    G = p.g0 * (N - p.N_tr) / (1.0 + p.eps_sat * S)
    net = 0.5 * (G - 1.0 / p.tau_p)
    dE = (net + 1j * (p.alpha_h * net + detuning)) * E
    dN = pump - N / p.tau_n - G * S
    return dE, dN


def step(state: SimState, p: LaserParams, pump, r_ase, dt, rng, *, scheme="euler_maruyama", step_index=0):
    """Advance one time step.

    Works on scalars or on arrays of independent paths (broadcast over
    ``e_field``/``n_carriers``). Consumes two standard normals per path from
    ``rng``, real part first, in the same order as the compiled kernel.
    """
    E = np.asarray(state.e_field, dtype=np.complex128)
    N = np.asarray(state.n_carriers, dtype=float)
    shape = np.broadcast(E, N).shape
    # (re, im) pairs per path, the order the compiled kernel draws them
    xi = rng.standard_normal(shape + (2,))
    w_unit = xi[..., 0] + 1j * xi[..., 1]

    def noise_sigma(n):
        rsp = p.beta_sp * np.maximum(n, 0.0) / p.tau_n
        return np.sqrt(0.5 * (rsp + r_ase) * dt)

    dE, dN = _drift(E, N, p, pump, state.detuning)
    sig = noise_sigma(N)
    if scheme == "euler_maruyama":
        E1 = E + dE * dt + sig * w_unit
        N1 = N + dN * dt
    elif scheme == "stochastic_heun":
        Ep = E + dE * dt + sig * w_unit
        Np = np.maximum(N + dN * dt, 0.0)
        dE2, dN2 = _drift(Ep, Np, p, pump, state.detuning)
        E1 = E + 0.5 * (dE + dE2) * dt + 0.5 * (sig + noise_sigma(Np)) * w_unit
        N1 = N + 0.5 * (dN + dN2) * dt
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    N1 = np.maximum(N1, 0.0)
    if not (np.all(np.isfinite(E1)) and np.all(np.isfinite(N1))):
        raise IntegratorDivergence(step_index)
    if not shape:
        E1, N1 = complex(E1), float(N1)
    return SimState(E1, N1, state.t + dt, state.detuning)


# ---------------------------------------------------------------- compiled kernel


@njit(cache=True)
def _integrate(E, N, pump, detuning, n_periods, record_every, heun,
               tau_p, tau_n, beta_sp, g0, N_tr, eps_sat, alpha_h, r_ase, dt, rng, out):
    steps = pump.shape[0]
    k = 0
    j = 0
    acc_re = 0.0
    acc_im = 0.0
    clamps = 0
    inv_tp = 1.0 / tau_p
    inv_tn = 1.0 / tau_n
    for per in range(n_periods):
        dw = detuning[per]
        for i in range(steps):
            er = E.real
            ei = E.imag
            S = er * er + ei * ei
            G = g0 * (N - N_tr) / (1.0 + eps_sat * S)
            net = 0.5 * (G - inv_tp)
            ph = alpha_h * net + dw
            fr = net * er - ph * ei
            fi = net * ei + ph * er
            sig = math.sqrt(0.5 * (beta_sp * N * inv_tn + r_ase) * dt)
            x1 = rng.standard_normal()
            x2 = rng.standard_normal()
            dN = pump[i] - N * inv_tn - G * S
            if heun:
                pr = er + fr * dt + sig * x1
                pi = ei + fi * dt + sig * x2
                Np = N + dN * dt
                if Np < 0.0:
                    Np = 0.0
                S2 = pr * pr + pi * pi
                G2 = g0 * (Np - N_tr) / (1.0 + eps_sat * S2)
                net2 = 0.5 * (G2 - inv_tp)
                ph2 = alpha_h * net2 + dw
                fr2 = net2 * pr - ph2 * pi
                fi2 = net2 * pi + ph2 * pr
                sig2 = math.sqrt(0.5 * (beta_sp * Np * inv_tn + r_ase) * dt)
                dN2 = pump[i] - Np * inv_tn - G2 * S2
                sa = 0.5 * (sig + sig2)
                er = er + 0.5 * (fr + fr2) * dt + sa * x1
                ei = ei + 0.5 * (fi + fi2) * dt + sa * x2
                N = N + 0.5 * (dN + dN2) * dt
            else:
                er = er + fr * dt + sig * x1
                ei = ei + fi * dt + sig * x2
                N = N + dN * dt
            if N < 0.0:
                N = 0.0
                clamps += 1
            if not (math.isfinite(er) and math.isfinite(ei) and math.isfinite(N)):
                return complex(er, ei), N, clamps, per * steps + i
            E = complex(er, ei)
            acc_re += er
            acc_im += ei
            j += 1
            if j == record_every:
                out[k] = complex(acc_re / record_every, acc_im / record_every)
                k += 1
                j = 0
                acc_re = 0.0
                acc_im = 0.0
    return E, N, clamps, -1


# ---------------------------------------------------------------- simulator


class PulseTrainSimulator:
    """Stateful integrator that emits the pulse train block by block.

    Blocks are contiguous: concatenating every block yields exactly the
    trace :func:`simulate_pulse_train` returns for the same inputs.
    """

    def __init__(self, p: LaserParams, drive: DriveWaveform, ase: ASESource, cfg: IntegratorConfig,
                 r_ase: float | None = None):
        self.p = p
        self.drive = drive
        self.ase = ase
        self.cfg = cfg
        self.steps = cfg.steps_per_period(drive.rep_rate)
        self.period = 1.0 / drive.rep_rate
        self.r_ase = coupled_ase_rate(ase, p) if r_ase is None else float(r_ase)
        t = np.arange(self.steps) * cfg.dt
        self.pump = np.ascontiguousarray(drive.pump(t), dtype=float)
        self._rng = stream_for(cfg.seed, "field", cfg.stream_base)
        self._freq_rng = stream_for(cfg.seed, "frequency", cfg.stream_base)
        sigma_w = 2 * math.pi * p.freq_noise_rms
        self._ou_a = math.exp(-self.period / p.freq_noise_time)
        self._ou_b = sigma_w * math.sqrt(1.0 - self._ou_a**2)
        self._detuning = sigma_w * self._freq_rng.standard_normal()
        self.state = SimState(0j, p.N_tr, 0.0, self._detuning)
        self.periods_done = 0
        self.clamp_events = 0
        self._burned = False

    @property
    def record_dt(self) -> float:
        return self.cfg.dt * self.cfg.record_every

    @property
    def samples_per_period(self) -> int:
        return self.steps // self.cfg.record_every

    def _detuning_block(self, n):
        # value applied during each period; advanced before use
        xi = self._freq_rng.standard_normal(n)
        out = np.empty(n)
        d = self._detuning
        for i in range(n):
            d = self._ou_a * d + self._ou_b * xi[i]
            out[i] = d
        self._detuning = d
        return out

    def _advance(self, n_periods, out):
        p = self.p
        det = self._detuning_block(n_periods)
        E, N, clamps, bad = _integrate(
            complex(self.state.e_field), float(self.state.n_carriers), self.pump, det, n_periods,
            self.cfg.record_every, self.cfg.scheme == "stochastic_heun",
            p.tau_p, p.tau_n, p.beta_sp, p.g0, p.N_tr, p.eps_sat, p.alpha_h,
            self.r_ase, self.cfg.dt, self._rng, out,
        )
        if bad >= 0:
            raise IntegratorDivergence(self.periods_done * self.steps + bad)
        if clamps:
            self.clamp_events += clamps
            log.debug("carrier count clamped at zero %d times", clamps)
        self.periods_done += n_periods
        self.state = SimState(E, N, self.periods_done * self.period, float(det[-1]))

    def burn_in(self):
        if not self._burned:
            n = self.cfg.burn_in_pulses
            if n:
                self._advance(n, np.empty(n * self.samples_per_period, dtype=np.complex128))
            self._burned = True

    def run_block(self, n_pulses: int) -> FieldTrace:
        self.burn_in()
        t0 = self.periods_done * self.period
        out = np.empty(n_pulses * self.samples_per_period, dtype=np.complex128)
        self._advance(n_pulses, out)
        return FieldTrace(out, self.record_dt, t0, self.drive.rep_rate, self.metadata())

    def blocks(self, block_pulses: int, n_pulses: int | None = None):
        """Yield consecutive FieldTrace blocks covering ``n_pulses`` periods."""
        total = self.cfg.n_pulses if n_pulses is None else n_pulses
        done = 0
        while done < total:
            n = min(block_pulses, total - done)
            yield self.run_block(n)
            done += n

    def metadata(self):
        return {
            "seed": self.cfg.seed,
            "stream_base": self.cfg.stream_base,
            "r_ase": self.r_ase,
            "laser": asdict(self.p),
            "drive": asdict(self.drive),
            "ase": asdict(self.ase),
            "integrator": asdict(self.cfg),
        }


def simulate_pulse_train(p: LaserParams, drive: DriveWaveform, ase: ASESource, cfg: IntegratorConfig) -> FieldTrace:
    """Integrate ``cfg.n_pulses`` drive periods after discarding the burn-in."""
    sim = PulseTrainSimulator(p, drive, ase, cfg)
    return sim.run_block(cfg.n_pulses)


def pure_phase_diffusion_reference(linewidth, dt, n_steps, n_paths, seed, stream_id=None) -> np.ndarray:
    """Terminal phases of ``dphi = sqrt(2 D) dW`` with ``D = pi * linewidth``."""
    if linewidth < 0 or dt <= 0 or n_steps < 1 or n_paths < 1:
        raise ConfigError("pure_phase_diffusion_reference: arguments must be positive")
    rng = stream_for(seed, "reference") if stream_id is None else make_noise_stream(seed, stream_id)
    amp = math.sqrt(2.0 * math.pi * linewidth * dt)
    phi = np.zeros(int(n_paths))
    for _ in range(int(n_steps)):
        phi += amp * rng.standard_normal(phi.size)
    return phi


# ---------------------------------------------------------------- persistence


def save_trace(trace: FieldTrace, path, extra=None):
    """Write ``path`` (little-endian float64 re/im pairs) plus ``path.json``."""
    path = Path(path)
    data = np.empty(2 * len(trace), dtype="<f8")
    data[0::2] = trace.samples.real
    data[1::2] = trace.samples.imag
    data.tofile(path)
    side = {"dt": trace.dt, "t0": trace.t0, "rep_rate": trace.rep_rate, "n_samples": len(trace)}
    side.update(trace.meta)
    if extra:
        side.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True, default=_json_default))
    return path


def load_trace(path) -> FieldTrace:
    path = Path(path)
    side = json.loads(Path(str(path) + ".json").read_text())
    raw = np.fromfile(path, dtype="<f8")
    samples = raw[0::2] + 1j * raw[1::2]
    meta = {k: v for k, v in side.items() if k not in ("dt", "t0", "rep_rate", "n_samples")}
    return FieldTrace(samples, side["dt"], side["t0"], side["rep_rate"], meta)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def with_seed(cfg: IntegratorConfig, seed: int) -> IntegratorConfig:
    return replace(cfg, seed=seed)
