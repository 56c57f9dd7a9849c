"""Run presets end to end and write their artifacts."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .. import __version__
from ..analysis import (
    AnalysisReport,
    JitterAccumulator,
    WelchAccumulator,
    arcsine_gof_test,
    autocorrelation,
    histogram,
    min_entropy,
    monobit_test,
    optical_spectrum,
    rayleigh_test,
    runs_test,
    samples_to_bits,
    throughput,
    toeplitz_extract,
)
from ..analysis.phase import phase_differences, pulse_peaks
from ..analysis.report import sha256_file
from ..analysis.spectrum import MIN_SPECTRUM_SAMPLES, segment_length
from ..engine import PulseTrainSimulator
from ..errors import ConfigError, GainSwitchError
from ..optics import MeasurementChain
from ..rng import derive_stream_base
from ..samples import PulseSamples
from .config import ExperimentConfig

log = logging.getLogger(__name__)

__all__ = ["RunManifest", "SweepResult", "simulate_and_analyze", "regime_assertions", "run_experiment", "sweep"]

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG = 0, 1, 2

ARTIFACTS = ("report.json", "histogram.csv", "autocorr.csv", "spectrum.csv", "samples.u8", "config.yaml")


@dataclass
class RunManifest:
    config: dict
    version: str
    started: str
    finished: str
    files: dict
    report_hash: str
    assertions: list
    exit_status: int
    output_dir: str
    summary: dict = field(default_factory=dict)
    error: str = ""

    @property
    def passed(self) -> bool:
        return self.exit_status == EXIT_OK

    @property
    def failed_assertions(self):
        return [a["name"] for a in self.assertions if not a["passed"]]

    def to_dict(self):
        return {
            "config": self.config,
            "software": {"package": "gainswitch", "version": self.version, "python": platform.python_version(),
                         "numpy": np.__version__},
            "started": self.started,
            "finished": self.finished,
            "files": self.files,
            "report_hash": self.report_hash,
            "assertions": self.assertions,
            "exit_status": self.exit_status,
            "output_dir": self.output_dir,
            "summary": self.summary,
            "error": self.error,
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def simulate_and_analyze(cfg: ExperimentConfig):
    """Run the full chain for ``cfg``; returns ``(report, codes)``.

    The simulator output is streamed block by block: each block feeds the
    measurement chain, the timing-jitter and phase collectors, and (for the
    leading ``spectrum_pulses`` periods) the optical spectrum.
    """
    a = cfg.analysis
    laser, drive, ase, icfg, ccfg = cfg.laser(), cfg.drive(), cfg.ase(), cfg.integrator(), cfg.chain()
    rep = drive.rep_rate
    base = icfg.stream_base
    sim = PulseTrainSimulator(laser, drive, ase, icfg)
    spp = sim.samples_per_period
    chain = MeasurementChain(ccfg, rep, sim.record_dt, seed=cfg.seed, stream_base=base)
    t_start = time.perf_counter()
    cal = chain.calibrate(sim.run_block(ccfg.calibration_pulses))

    n = cfg.n_pulses
    block = max(1, cfg.params["integrator"]["block_samples"] // spp)
    spec_pulses = max(a["spectrum_pulses"], -(-MIN_SPECTRUM_SAMPLES // spp))
    welch = WelchAccumulator(sim.record_dt, segment_length(spp))
    jit = JitterAccumulator(sim.record_dt, spp, a["jitter_threshold"])
    codes = np.empty(n, dtype=np.int64)
    peaks_i, peaks_p = [], []
    got = 0
    fed = 0
    for b in sim.blocks(block, n + chain.lag_pulses):
        p0, c = chain.feed(b)
        if c.shape[0]:
            take = min(c.shape[0], n - got)
            if take > 0:
                codes[got:got + take] = c[:take, cal.offset_index]
                got += take
        if fed < n:
            m = min(b.n_pulses, n - fed)
            x = b.samples[:m * spp]
            ip, ph = pulse_peaks(x, spp)
            peaks_i.append(ip)
            peaks_p.append(ph)
            jit.add(np.abs(x) ** 2, b.start_index)
            if fed < spec_pulses:
                welch.add(x[:(min(m, spec_pulses - fed)) * spp])
            fed += m
    if got < n:
        raise GainSwitchError(f"measurement chain returned {got} of {n} samples")
    sim_seconds = time.perf_counter() - t_start

    bits = ccfg.adc_bits
    s = PulseSamples(codes, rep, bits=bits, meta={"offset_index": cal.offset_index})
    noise = ccfg.noise_codes
    gof = arcsine_gof_test(s, method=a["gof_method"], noise_rms=noise, alpha=a["gof_alpha"],
                           max_samples=a["gof_max_samples"], seed=cfg.seed)
    ac = autocorrelation(s, a["max_lag"])
    hist = histogram(s, a["hist_bins"])
    spectrum = optical_spectrum(_RateOnly(rep), accumulator=welch, wavelength=laser.lambda_c)
    jr = jit.result(rep)
    d, skipped = phase_differences(np.concatenate(peaks_i), np.concatenate(peaks_p))
    ray = rayleigh_test(d, a["rayleigh_alpha"])
    ent = min_entropy(s, bits, gof_passed=gof.passed, confidence=a["entropy_confidence"], n_boot=a["n_boot"],
                      seed=cfg.seed)

    results = {
        "samples": {"n": n, "bits": bits, "offset_index": cal.offset_index, "min_code": int(codes.min()),
                    "max_code": int(codes.max()), "mean": float(codes.mean())},
        "calibration": {"phase_trim": cal.phase_trim, "full_scale": list(cal.full_scale),
                        "volts_per_code": cal.volts_per_code, "noise_rms": cal.noise_rms},
        "arcsine_gof": gof.to_dict(),
        "autocorrelation": {"lag1": float(ac.r[0]), "ci99": ac.ci99, "lag1_over_ci": float(ac.r[0] / ac.ci99),
                            "max_abs": ac.max_abs, "max_over_ci": ac.max_abs / ac.ci99, "max_lag": a["max_lag"]},
        "spectrum": {"comb_contrast_db": spectrum.comb_contrast, "tone_spacing_hz": spectrum.tone_spacing,
                     "tone_spacing_m": spectrum.tone_spacing_wavelength, "comb_offset_hz": spectrum.comb_offset,
                     "harmonic_contrasts_db": spectrum.harmonic_contrasts, "nperseg": spectrum.nperseg,
                     "n_segments": spectrum.n_segments},
        "jitter": {"rms_s": jr.rms, "n_pulses": jr.n_pulses, "n_failed": jr.n_failed},
        "phase": {"mean_resultant": ray.mean_resultant, "p_value": ray.p_value, "uniform": ray.uniform,
                  "n": int(d.size), "skipped": skipped},
        "min_entropy": ent.to_dict(),
        "extraction": _extraction(codes, ent.h_min, bits, rep, cfg),
    }
    regime = cfg.regime()
    checks = regime_assertions(regime, results, a)
    results["regime"] = regime or "none"
    results["assertions"] = checks
    results["passed"] = all(c["passed"] for c in checks)

    settings = {k: v for k, v in cfg.to_dict().items() if k != "output_dir"}
    provenance = {"engine": sim.metadata(), "r_ase": sim.r_ase, "record_dt": sim.record_dt,
                  "samples_per_period": spp, "clamp_events": sim.clamp_events}
    arrays = {
        "histogram": {"code": np.asarray(hist.centers), "count": hist.counts},
        "autocorr": {"lag": ac.lags, "r": ac.r, "ci99": np.full(ac.r.size, ac.ci99)},
        "spectrum": {"frequency_hz": spectrum.freqs, "psd": spectrum.psd},
    }
    log.info("simulated %d pulses in %.1f s", n, sim_seconds)
    return AnalysisReport(results, settings, provenance, arrays), codes


class _RateOnly:
    """Stand-in trace carrying only the repetition rate for streaming spectra."""

    def __init__(self, rep_rate):
        self.rep_rate = rep_rate


def _extraction(codes, h, bits, rep, cfg):
    a = cfg.analysis
    out = {"throughput_ideal_bps": throughput(rep, h) if h > 0 else 0.0,
           "throughput_half_bps": throughput(rep, h, 0.5) if h > 0 else 0.0}
    if not a["extract"] or h <= 0:
        out["skipped"] = True
        return out
    raw = samples_to_bits(codes[:a["extract_samples"]], bits)
    try:
        y = toeplitz_extract(raw, h, bits, 2.0 ** -a["security_eps_log2"], seed=cfg.seed)
    except ConfigError as e:
        out.update(skipped=True, reason=str(e))
        return out
    mb = monobit_test(y, a["bit_test_alpha"])
    rn = runs_test(y, a["bit_test_alpha"])
    out.update(skipped=False, input_bits=int(raw.size), output_bits=int(y.size),
               monobit_p=mb.p_value, monobit_passed=mb.passed, runs_p=rn.p_value, runs_passed=rn.passed,
               ones_fraction=float(y.mean()))
    return out


def _check(name, value, op, limit):
    ok = {"<=": value <= limit, ">=": value >= limit, "<": value < limit, "is": value is limit}[op]
    return {"name": name, "value": value, "op": op, "limit": limit, "passed": bool(ok)}


def regime_assertions(regime, results, a):
    """Checks that define each regime; empty for ``None``."""
    if regime is None:
        return []
    gof = results["arcsine_gof"]["passed"]
    acr = results["autocorrelation"]
    comb = results["spectrum"]["comb_contrast_db"]
    if regime == "A":
        return [_check("arcsine_pass", gof, "is", True),
                _check("autocorr_max_within_bound", acr["max_over_ci"], "<=", a["autocorr_bound"]),
                _check("comb_absent", comb, "<=", a["comb_max_db"])]
    if regime == "B":
        return [_check("arcsine_fail", gof, "is", False),
                _check("lag1_correlated", acr["lag1_over_ci"], ">=", a["correlated_factor"]),
                _check("comb_present", comb, ">=", a["comb_min_db"])]
    if regime == "C":
        return [_check("arcsine_pass", gof, "is", True),
                _check("lag1_within_bound", acr["lag1_over_ci"], "<", a["autocorr_bound"]),
                _check("comb_absent", comb, "<=", a["comb_max_db"])]
    raise ValueError(f"unknown regime {regime!r}")


def summary_row(report):
    r = report.results
    return {
        "passed": r["passed"],
        "gof_p_value": r["arcsine_gof"]["p_value"],
        "lag1_over_ci": r["autocorrelation"]["lag1_over_ci"],
        "max_over_ci": r["autocorrelation"]["max_over_ci"],
        "comb_contrast": r["spectrum"]["comb_contrast_db"],
        "jitter_rms": r["jitter"]["rms_s"],
        "mean_resultant": r["phase"]["mean_resultant"],
        "h_min": r["min_entropy"]["h_min"],
    }


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> RunManifest:
    """Single run: simulate, analyze, write artifacts and ``manifest.json``.

    Exit status is 0 when every regime assertion holds, 1 otherwise.
    """
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    for w in cfg.warnings:
        log.warning(w)
    report, codes = simulate_and_analyze(cfg)
    report.write_json(out / "report.json")
    report.write_csvs(out)
    bits = cfg.params["chain"]["adc_bits"]
    (codes.astype(np.uint8 if bits <= 8 else "<u2")).tofile(out / "samples.u8")
    (out / "config.yaml").write_text(cfg.to_yaml())
    files = {name: sha256_file(out / name) for name in ARTIFACTS}
    checks = report.results["assertions"]
    status = EXIT_OK if all(c["passed"] for c in checks) else EXIT_ASSERT
    m = RunManifest(cfg.to_dict(), __version__, started, _now(), files, report.content_hash(), checks, status,
                    str(out), summary_row(report))
    m.write(out / "manifest.json")
    return m


def _fmt(v):
    return f"{v:g}" if isinstance(v, float) else str(v)


def _sweep_one(args):
    cfg, path, value, out = args
    run_cfg = cfg.with_values(**{path: value, "integrator.stream_base": derive_stream_base(path, _fmt(value)),
                                 "sweep.param": None, "sweep.values": []})
    try:
        return run_experiment(run_cfg, out)
    except GainSwitchError as e:
        Path(out).mkdir(parents=True, exist_ok=True)
        return RunManifest(run_cfg.to_dict(), __version__, _now(), _now(), {}, "", [], EXIT_ASSERT, str(out),
                           error=f"{type(e).__name__}: {e}")


@dataclass
class SweepResult:
    param: str | None
    values: list
    manifests: list
    trend: dict | None
    summary_path: str | None

    @property
    def exit_status(self) -> int:
        bad = any(not m.passed for m in self.manifests) or (self.trend is not None and not self.trend["passed"])
        return EXIT_ASSERT if bad else EXIT_OK


def _trend_check(kind, key, values, col):
    if kind == "none" or len(col) < 2:
        return None
    order = np.argsort(values, kind="stable")
    y = [col[i] for i in order]
    if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in y):
        ok = False
    elif kind == "increasing":
        ok = all(b > a for a, b in zip(y, y[1:]))
    else:
        ok = all(b <= a for a, b in zip(y, y[1:]))
    return {"name": f"{key}_{kind}", "key": key, "kind": kind, "values": [values[i] for i in order],
            "series": y, "passed": bool(ok)}


def sweep(cfg: ExperimentConfig, parameter_path=None, values=None, output_dir=None, workers=None) -> SweepResult:
    """Independent runs over ``values`` of ``parameter_path``.

    Each value gets its own stream block derived from ``(path, value)``, so
    results do not depend on the order of ``values``. Failures are recorded
    and the sweep continues. Writes ``summary.csv``.
    """
    path = parameter_path or cfg.sweep["param"]
    vals = list(cfg.sweep["values"] if values is None else values)
    out = Path(output_dir or cfg.output_dir)
    if path is None:
        raise ConfigError("sweep needs a parameter path", ["sweep.param: required"])
    sec, _, key = path.partition(".")
    if sec not in cfg.params or sec == "sweep" or key not in cfg.params[sec]:
        raise ConfigError(f"unknown parameter path {path!r}", [f"sweep.param: unknown parameter path {path!r}"])
    # validate every value before running anything
    for v in vals:
        cfg.with_values(**{path: v})
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, path, v, str(out / f"{path}={_fmt(v)}")) for v in vals]
    n_workers = workers or cfg.sweep["workers"]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            manifests = list(ex.map(_sweep_one, jobs))
    else:
        manifests = [_sweep_one(j) for j in jobs]

    cols = ["value", "exit_status", "passed", "gof_p_value", "lag1_over_ci", "max_over_ci", "comb_contrast",
            "jitter_rms", "mean_resultant", "h_min", "error"]
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for v, m in zip(vals, manifests):
            row = {"value": v, "exit_status": m.exit_status, "error": m.error, **m.summary}
            w.writerow([row.get(c, "") for c in cols])
    key_ = cfg.sweep["trend_key"]
    trend = _trend_check(cfg.sweep["trend"], key_, vals, [m.summary.get(key_) for m in manifests])
    if trend is not None:
        (out / "trend.json").write_text(json.dumps(trend, indent=2, default=_json_default))
    (out / "sweep.yaml").write_text(yaml.safe_dump({"param": path, "values": vals}, sort_keys=False))
    return SweepResult(path, vals, manifests, trend, str(summary))
