"""Experiment configuration, runners, artifacts and the command-line driver."""

from .config import ConfigError, ExperimentConfig, list_presets, load_config, load_preset
from .experiments import Outcome, run_experiment
from .runner import OUTPUT_ROOT_ENV, RunResult, execute, report_table
from .serialize import dumps, write_csv, write_json

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "list_presets",
    "load_config",
    "load_preset",
    "Outcome",
    "run_experiment",
    "OUTPUT_ROOT_ENV",
    "RunResult",
    "execute",
    "report_table",
    "dumps",
    "write_csv",
    "write_json",
]
