"""Deterministic federated-learning simulator for UAV fleets: straggler,
dropout, and malicious-update filtering ahead of selective aggregation."""

__version__ = "0.1.0"

from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    load_config,
    save_config,
)
from .presets import benchmark_config, quickstart_config
from .orchestrator import (
    ExperimentResult,
    RoundLog,
    build_fleet,
    run_experiment,
    run_sweep,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "RoundLog",
    "apply_overrides",
    "benchmark_config",
    "build_fleet",
    "quickstart_config",
    "load_config",
    "run_experiment",
    "run_sweep",
    "save_config",
    "__version__",
]
