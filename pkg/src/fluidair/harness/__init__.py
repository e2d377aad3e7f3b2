"""Experiment orchestration: configs, method grids and result files."""

from fluidair.harness.config import ExperimentConfig, from_ini, load, to_ini
from fluidair.harness.experiment import ExperimentResult, run_experiment
from fluidair.harness.results import HEADER, ResultRow, emit_results, parse_csv

__all__ = [
    "ExperimentConfig", "ExperimentResult", "HEADER", "ResultRow", "emit_results", "from_ini",
    "load", "parse_csv", "run_experiment", "to_ini",
]
