"""Config-driven experiment harness."""

from nblend.harness.config import ConfigError, ExperimentConfig, load_audit, load_experiment
from nblend.harness.seeds import derive_seed

__all__ = ["ConfigError", "ExperimentConfig", "derive_seed", "load_audit", "load_experiment"]
