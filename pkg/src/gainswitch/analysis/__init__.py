"""Statistics used as evidence of interpulse phase randomness."""
from ..samples import PulseSamples
from .basic import AutocorrResult, Histogram, autocorrelation, histogram
from .entropy import EntropyResult, min_entropy, min_entropy_from_width, width_for_entropy
from .extract import monobit_test, runs_test, samples_to_bits, throughput, toeplitz_extract
from .gof import GofResult, arcsine_cdf, arcsine_gof_test
from .jitter import JitterAccumulator, JitterResult, timing_jitter
from .phase import PhaseResult, phase_ground_truth, rayleigh_test
from .report import AnalysisReport
from .spectrum import SpectrumResult, WelchAccumulator, optical_spectrum, wavelength_spacing

__all__ = [
    "PulseSamples",
    "Histogram",
    "histogram",
    "AutocorrResult",
    "autocorrelation",
    "GofResult",
    "arcsine_cdf",
    "arcsine_gof_test",
    "SpectrumResult",
    "WelchAccumulator",
    "optical_spectrum",
    "wavelength_spacing",
    "JitterResult",
    "JitterAccumulator",
    "timing_jitter",
    "EntropyResult",
    "min_entropy",
    "min_entropy_from_width",
    "width_for_entropy",
    "toeplitz_extract",
    "samples_to_bits",
    "monobit_test",
    "runs_test",
    "throughput",
    "PhaseResult",
    "phase_ground_truth",
    "rayleigh_test",
    "AnalysisReport",
]
