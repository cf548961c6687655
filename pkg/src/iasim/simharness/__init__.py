"""Experiment harness: configs, the Monte Carlo runner, self-checks and the CLI."""

from .config import PRESETS, ConfigError, ExperimentConfig, load_config, parse_config, preset
from .runner import (CSV_HEADER, PARTITION_CSV_HEADER, PartitionRow, ResultRow, rows_to_csv, partition_rows_to_csv,
                     run_experiment, run_partition_study, trial_seed, write_csv)
from .validate import ValidationReport, validate_suite

__all__ = [
    "PRESETS", "ConfigError", "ExperimentConfig", "load_config", "parse_config", "preset",
    "CSV_HEADER", "PARTITION_CSV_HEADER", "PartitionRow", "ResultRow", "rows_to_csv", "partition_rows_to_csv",
    "run_experiment", "run_partition_study", "trial_seed", "write_csv",
    "ValidationReport", "validate_suite",
]
