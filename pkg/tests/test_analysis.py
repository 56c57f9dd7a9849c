import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal, stats

from gainswitch.analysis import (
    AnalysisReport,
    PulseSamples,
    WelchAccumulator,
    arcsine_cdf,
    arcsine_gof_test,
    autocorrelation,
    histogram,
    min_entropy,
    min_entropy_from_width,
    monobit_test,
    optical_spectrum,
    phase_ground_truth,
    rayleigh_test,
    runs_test,
    samples_to_bits,
    throughput,
    timing_jitter,
    toeplitz_extract,
    wavelength_spacing,
    width_for_entropy,
)
from gainswitch.analysis.entropy import _percentile_int
from gainswitch.analysis.extract import extracted_length, toeplitz_matrix
from gainswitch.analysis.spectrum import comb_contrast
from gainswitch.engine import FieldTrace
from gainswitch.errors import ConfigError, InputError
from gainswitch.optics import IntensityTrace

# mpmath (30 digits) evaluations of -log2(1 - (2/pi) atan(sqrt(r))) at r = D/d - 1
H_256 = 4.650555526697767
H_163 = 4.3243817286877845


def arcsine_codes(n, seed, lo=20.0, width=220.0, noise=0.0):
    rng = np.random.default_rng(seed)
    x = lo + width * 0.5 * (1 + np.cos(rng.uniform(0, 2 * np.pi, n))) + noise * rng.standard_normal(n)
    return np.clip(np.floor(x), 0, 255).astype(np.int64)


# ---------------------------------------------------------------- samples, histogram, autocorrelation


def test_pulse_samples_validation():
    with pytest.raises(InputError):
        PulseSamples(np.array([1]), 1e9)
    with pytest.raises(InputError):
        PulseSamples(np.array([1.5, 2.0]), 1e9)
    with pytest.raises(InputError):
        PulseSamples(np.array([0, 256]), 1e9)
    with pytest.raises(InputError):
        PulseSamples(np.array([0.0, np.nan]), 1e9, bits=None)
    s = PulseSamples(np.array([1.0, 2.0]), 1e9)
    assert s.values.dtype == np.int64 and s.count == 2


def test_histogram_matches_bincount():
    v = arcsine_codes(5000, 0)
    h = histogram(PulseSamples(v, 1e9))
    np.testing.assert_array_equal(h.counts, np.bincount(v, minlength=256))
    np.testing.assert_allclose(h.centers, np.arange(256) + 0.5)
    with pytest.raises(InputError):
        histogram(PulseSamples(v, 1e9), n_bins=1)


def test_autocorrelation_against_direct_sum():
    rng = np.random.default_rng(5)
    e = rng.standard_normal(20000)
    x = signal.lfilter([1.0], [1.0, -0.3], e)
    ac = autocorrelation(x, 20)
    xc = x - x.mean()
    full = np.correlate(xc, xc, mode="full")[x.size - 1:] / np.dot(xc, xc)
    np.testing.assert_allclose(ac.r, full[1:21], rtol=1e-10)
    assert ac.r[0] == pytest.approx(0.3, abs=0.03)
    assert ac.ci99 == pytest.approx(2.576 / math.sqrt(20000))
    assert ac.ratio(1) == pytest.approx(abs(ac.r[0]) / ac.ci99)
    np.testing.assert_array_equal(ac.lags, np.arange(1, 21))


def test_autocorrelation_white_noise_mostly_within_ci():
    x = np.random.default_rng(6).standard_normal(100000)
    ac = autocorrelation(x, 100)
    assert np.mean(np.abs(ac.r) > ac.ci99) < 0.05


def test_autocorrelation_errors():
    with pytest.raises(InputError):
        autocorrelation(np.arange(50.0), 5)
    with pytest.raises(InputError):
        autocorrelation(np.ones(5000), 5)


# ---------------------------------------------------------------- arcsine GOF


def test_arcsine_cdf_matches_scipy():
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(arcsine_cdf(x), stats.arcsine.cdf(x), atol=1e-14)


def test_gof_accepts_quantized_arcsine():
    s = PulseSamples(arcsine_codes(200000, 1), 10e9)
    r = arcsine_gof_test(s)
    assert r.passed and r.p_value >= 0.01
    assert r.params["w"] == pytest.approx(220, rel=0.02)


def test_gof_accepts_noisy_arcsine_with_known_noise():
    s = PulseSamples(arcsine_codes(200000, 2, noise=2.0), 10e9)
    assert arcsine_gof_test(s, noise_rms=2.0).passed


@pytest.mark.parametrize("maker", [
    lambda rng: np.clip(np.floor(128 + 30 * rng.standard_normal(100000)), 0, 255),
    lambda rng: np.floor(rng.uniform(20, 240, 100000)),
    lambda rng: np.clip(np.floor(200 + 20 * rng.standard_normal(100000) - 60 * (rng.random(100000) < 0.3)), 0, 255),
])
def test_gof_rejects_other_shapes(maker):
    v = maker(np.random.default_rng(3)).astype(np.int64)
    assert not arcsine_gof_test(PulseSamples(v, 10e9), noise_rms=2.0).passed


def test_gof_percentile_variant():
    rng = np.random.default_rng(4)
    x = 0.5 * (1 + np.cos(rng.uniform(0, 2 * np.pi, 50000)))
    assert arcsine_gof_test(PulseSamples(x, 1e9, bits=None), method="percentile").passed
    g = rng.normal(0.5, 0.1, 50000)
    assert not arcsine_gof_test(PulseSamples(g, 1e9, bits=None), method="percentile").passed


def test_gof_degenerate_and_unknown_method():
    r = arcsine_gof_test(PulseSamples(np.full(100, 7), 1e9))
    assert not r.passed and "degenerate" in r.reason
    with pytest.raises(ValueError):
        arcsine_gof_test(PulseSamples(arcsine_codes(1000, 0), 1e9), method="chi2")


def test_gof_is_deterministic_and_serializable():
    s = PulseSamples(arcsine_codes(30000, 7), 1e9)
    a, b = arcsine_gof_test(s, seed=3), arcsine_gof_test(s, seed=3)
    assert a == b
    json.dumps(a.to_dict())


# ---------------------------------------------------------------- spectrum


def test_tone_spacing_in_wavelength():
    assert wavelength_spacing(10e9, 1550e-9) * 1e9 == pytest.approx(0.0801, abs=1e-4)


def test_welch_accumulator_matches_scipy_welch():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(50000) + 1j * rng.standard_normal(50000)
    dt = 1e-12
    acc = WelchAccumulator(dt, 4096)
    for part in np.array_split(x, 7):
        acc.add(part)
    f, p = acc.result()
    fr, pr = signal.welch(x, fs=1 / dt, window="hann", nperseg=4096, noverlap=2048, detrend=False,
                          return_onesided=False, scaling="density")
    np.testing.assert_allclose(p, np.fft.fftshift(pr), rtol=1e-10)
    np.testing.assert_allclose(f, np.fft.fftshift(fr))


def _pulse_train(n, spp, phases, dt=2.5e-12):
    t = np.arange(spp)
    env = np.exp(-0.5 * ((t - spp / 2) / 2.0) ** 2)
    x = (env[None, :] * np.exp(1j * phases)[:, None]).ravel()
    return FieldTrace(x, dt, 0.0, 1 / (spp * dt))


def test_comb_contrast_coherent_vs_random():
    # the tone search has a small positive bias that shrinks with the segment count
    rng = np.random.default_rng(9)
    n = 20000
    coherent = _pulse_train(n, 40, 0.05 * np.cumsum(rng.standard_normal(n)) * 0.1)
    random = _pulse_train(n, 40, rng.uniform(0, 2 * np.pi, n))
    rc = optical_spectrum(coherent)
    rr = optical_spectrum(random)
    assert rc.comb_contrast > 20
    assert rr.comb_contrast < 3
    assert rc.tone_spacing == pytest.approx(10e9)


def test_comb_offset_follows_frequency_shift():
    n, spp, dt = 4000, 40, 2.5e-12
    shift = 2e9
    k = np.arange(n * spp)
    tr = _pulse_train(n, spp, np.zeros(n), dt)
    x = tr.samples * np.exp(2j * np.pi * shift * k * dt)
    r = optical_spectrum(FieldTrace(x, dt, 0.0, tr.rep_rate))
    df = 1 / (r.nperseg * dt)
    assert abs(r.comb_offset - shift) <= df
    assert r.comb_contrast > 20


def test_comb_contrast_input_checks():
    f = np.linspace(-1e9, 1e9, 101)
    with pytest.raises(InputError):
        comb_contrast(f, np.ones(101), 10e9)
    with pytest.raises(InputError):
        optical_spectrum(_pulse_train(10, 40, np.zeros(10)))


# ---------------------------------------------------------------- jitter


def test_timing_jitter_recovers_injected_rms():
    rng = np.random.default_rng(10)
    dt, spp, n = 0.25e-12, 400, 5000
    shifts = 1.5e-12 * rng.standard_normal(n)
    t = np.arange(spp) * dt
    rows = np.exp(-0.5 * ((t[None, :] - 50e-12 - shifts[:, None]) / 5e-12) ** 2)
    tr = IntensityTrace(rows.ravel(), dt)
    r = timing_jitter(tr, 1 / (spp * dt))
    assert r.rms == pytest.approx(np.std(shifts), rel=0.02)
    assert r.n_failed == 0


def test_timing_jitter_needs_pulses():
    with pytest.raises(InputError):
        timing_jitter(IntensityTrace(np.ones(4000), 1e-12), 1e10)


# ---------------------------------------------------------------- phase ground truth


def test_rayleigh_test():
    rng = np.random.default_rng(11)
    u = rayleigh_test(rng.uniform(-np.pi, np.pi, 10000))
    assert u.uniform
    c = rayleigh_test(rng.vonmises(0.0, 2.0, 10000))
    assert not c.uniform and c.p_value < 1e-10
    # large-n p-value tends to exp(-z)
    a = rng.uniform(-np.pi, np.pi, 200000)
    r = rayleigh_test(a)
    assert r.p_value == pytest.approx(math.exp(-r.z), rel=0.05, abs=1e-3)


def test_phase_ground_truth_on_synthetic_trains():
    rng = np.random.default_rng(12)
    tr = _pulse_train(3000, 40, rng.uniform(-np.pi, np.pi, 3000))
    assert phase_ground_truth(tr).uniform
    locked = _pulse_train(3000, 40, 0.01 * np.arange(3000))
    r = phase_ground_truth(locked)
    assert not r.uniform
    np.testing.assert_allclose(r.dphi, 0.01, atol=1e-12)


# ---------------------------------------------------------------- min-entropy


def test_min_entropy_oracles():
    assert min_entropy_from_width(256) == pytest.approx(H_256, abs=1e-12)
    assert min_entropy_from_width(163) == pytest.approx(H_163, abs=1e-12)
    assert min_entropy_from_width(1) == 0.0
    assert min_entropy_from_width(2) == pytest.approx(1.0, abs=1e-12)  # atan(1) = pi/4
    assert min_entropy_from_width(512, 2) == pytest.approx(H_256, abs=1e-12)


@given(a=st.floats(1.0, 1e6), b=st.floats(1.0, 1e6))
def test_min_entropy_monotone_in_width(a, b):
    lo, hi = sorted((a, b))
    assert min_entropy_from_width(lo) <= min_entropy_from_width(hi)


@settings(max_examples=50)
@given(h=st.floats(0.01, 12.0))
def test_width_inversion_roundtrip(h):
    assert min_entropy_from_width(width_for_entropy(h)) == pytest.approx(h, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(codes=st.lists(st.integers(0, 255), min_size=2, max_size=400))
def test_percentile_from_counts_matches_numpy(codes):
    v = np.asarray(codes)
    counts = np.bincount(v, minlength=256).astype(float)
    lo, hi = np.percentile(v, [0.1, 99.9])
    assert _percentile_int(counts, np.arange(256.0)) == pytest.approx(hi - lo, abs=1e-9)


def test_min_entropy_on_samples():
    v = arcsine_codes(100000, 13, lo=10.0, width=230.0)
    s = PulseSamples(v, 10e9)
    r = min_entropy(s, gof_passed=True, n_boot=200)
    span = np.subtract(*np.percentile(v, [99.9, 0.1]))
    assert r.delta_cd == pytest.approx(span)
    assert r.h_min == pytest.approx(min_entropy_from_width(span))
    assert r.h_min_lower <= r.h_min and r.certified
    assert not min_entropy(s, gof_passed=False, n_boot=50).certified
    with pytest.warns(RuntimeWarning):
        z = min_entropy(PulseSamples(np.array([5, 5, 5, 6]), 1e9), n_boot=20)
    assert z.h_min == 0.0 and not z.certified
    with pytest.raises(InputError):
        min_entropy(PulseSamples(np.array([0.1, 0.2]), 1e9, bits=None))


# ---------------------------------------------------------------- extraction


def test_samples_to_bits_msb_first():
    np.testing.assert_array_equal(samples_to_bits([1, 128], 8), [0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0])
    with pytest.raises(InputError):
        samples_to_bits([256], 8)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(200, 600), seed=st.integers(0, 2**32), h=st.floats(2.0, 8.0))
def test_toeplitz_matches_dense_matrix(n, seed, h):
    x = np.random.default_rng(seed).integers(0, 2, n).astype(np.uint8)
    eps = 2.0**-16
    y = toeplitz_extract(x, h, 8, eps, seed=seed)
    m = extracted_length(n, h, 8, eps)
    assert y.size == m
    ref = (toeplitz_matrix(m, n, seed).astype(np.int64) @ x.astype(np.int64)) % 2
    np.testing.assert_array_equal(y, ref)


def test_toeplitz_lengths_and_errors():
    x = np.zeros(8000, np.uint8)
    assert toeplitz_extract(x, 8, 8, 2.0**-64).size == 8000 - 128
    assert toeplitz_extract(np.zeros(16000, np.uint8), 4, 8, 2.0**-10, block_bits=8000).size == 2 * (4000 - 20)
    with pytest.raises(ConfigError):
        toeplitz_extract(x, 9, 8)
    with pytest.raises(ConfigError):
        toeplitz_extract(np.zeros(100, np.uint8), 1, 8)


def test_bit_tests():
    rng = np.random.default_rng(14)
    good = rng.integers(0, 2, 100000)
    assert monobit_test(good).passed and runs_test(good).passed
    biased = (rng.random(100000) < 0.52).astype(int)
    assert not monobit_test(biased).passed
    alternating = np.arange(100000) % 2
    assert monobit_test(alternating).passed and not runs_test(alternating).passed


def test_extraction_whitens_skewed_raw_bits():
    v = arcsine_codes(40000, 15)
    raw = samples_to_bits(v, 8)
    assert not monobit_test(raw).passed
    h = min_entropy_from_width(220)
    y = toeplitz_extract(raw, h, 8)
    assert monobit_test(y).passed and runs_test(y).passed


def test_throughput_arithmetic():
    assert throughput(10e9, 4.321) == pytest.approx(43.21e9)
    assert throughput(10e9, 4.321, 0.5) == pytest.approx(21.605e9)
    with pytest.raises(InputError):
        throughput(10e9, 4.0, 0.0)


# ---------------------------------------------------------------- report


def test_report_hash_and_outputs(tmp_path):
    arrays = {"autocorr": {"lag": np.arange(1, 4), "r": np.array([0.1, 0.0, -0.1])}}
    a = AnalysisReport({"x": 1.0, "flag": np.bool_(True)}, {"s": 2}, {"seed": 0}, arrays)
    b = AnalysisReport({"x": 1.0, "flag": True}, {"s": 2}, {"seed": 0},
                       {"autocorr": {"lag": np.arange(1, 4), "r": np.array([0.1, 0.0, -0.1])}})
    assert a.content_hash() == b.content_hash()
    c = AnalysisReport({"x": 1.0, "flag": True}, {"s": 2}, {"seed": 0},
                       {"autocorr": {"lag": np.arange(1, 4), "r": np.array([0.1, 0.0, -0.2])}})
    assert c.content_hash() != a.content_hash()
    d = json.loads(a.write_json(tmp_path / "r.json").read_text())
    assert d["content_hash"] == a.content_hash() and d["results"]["flag"] is True
    (path,) = a.write_csvs(tmp_path)
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(back[:, 1], [0.1, 0.0, -0.1])
    assert path.read_text().splitlines()[0] == "lag,r"
