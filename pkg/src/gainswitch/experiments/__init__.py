"""Config-driven presets that run the full simulate-measure-analyze chain."""
from .config import PRESETS, ExperimentConfig, load_config, resolve, validate_config
from .runner import RunManifest, SweepResult, regime_assertions, run_experiment, simulate_and_analyze, sweep

__all__ = [
    "PRESETS",
    "ExperimentConfig",
    "load_config",
    "resolve",
    "validate_config",
    "RunManifest",
    "SweepResult",
    "regime_assertions",
    "run_experiment",
    "simulate_and_analyze",
    "sweep",
]
