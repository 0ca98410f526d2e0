"""Experiment harness: data files, configs, runs, summaries and plots."""
from .config import ExperimentConfig, MethodSpec, ProblemSpec, load_config, parse_config
from .io import ingest_matrices, read_trace, write_matrices, write_trace
from .plotting import emit_plot
from .runner import audit_experiment, run_experiment, select_best

__all__ = [
    "ExperimentConfig",
    "MethodSpec",
    "ProblemSpec",
    "parse_config",
    "load_config",
    "ingest_matrices",
    "write_matrices",
    "read_trace",
    "write_trace",
    "run_experiment",
    "audit_experiment",
    "select_best",
    "emit_plot",
]
