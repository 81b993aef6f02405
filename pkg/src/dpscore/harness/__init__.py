"""Experiment configuration, orchestration, privacy auditing and rate fitting."""

from .audit import AuditResult, gaussian_count_mechanism, laplace_count_mechanism, privacy_audit
from .config import ConfigError, ExperimentConfig, load_config, parse_config, resolve_delta
from .experiment import cell_summary, read_rows_csv, rows_to_csv, run_experiment
from .rates import RateFit, fit_loglog_slope

__all__ = [
    "AuditResult",
    "ConfigError",
    "ExperimentConfig",
    "RateFit",
    "cell_summary",
    "fit_loglog_slope",
    "gaussian_count_mechanism",
    "laplace_count_mechanism",
    "load_config",
    "parse_config",
    "privacy_audit",
    "read_rows_csv",
    "resolve_delta",
    "rows_to_csv",
    "run_experiment",
]
