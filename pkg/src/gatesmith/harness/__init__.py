"""Experiment configs, Monte Carlo verification, sweeps, and the CLI."""

from .config import (
    CONFIG_SCHEMA,
    ConfigError,
    Experiment,
    build_experiment,
    catalog_config,
    catalog_names,
    load_config,
    parse_operator,
    validate_config,
)
from .runner import (
    ExperimentError,
    SweepResult,
    infidelity_samples,
    monte_carlo_infidelity,
    run_experiment,
    scale_noise_sigmas,
    sigma_sweep,
)

__all__ = [
    "CONFIG_SCHEMA",
    "ConfigError",
    "Experiment",
    "ExperimentError",
    "SweepResult",
    "build_experiment",
    "catalog_config",
    "catalog_names",
    "infidelity_samples",
    "load_config",
    "monte_carlo_infidelity",
    "parse_operator",
    "run_experiment",
    "scale_noise_sigmas",
    "sigma_sweep",
    "validate_config",
]
