"""Declarative studies: configs, orchestration, reports and the CLI."""
from .config import (
    ConfigError,
    RunConfig,
    StudyConfig,
    builtin_path,
    load_config,
    parse_config,
)
from .emit import EmitError, emit, read_report, to_csv, to_dat, write_atomic
from .report import SCHEMA, Gate, StudyReport, canonical_json
from .runner import StudyError, run_study

__all__ = [
    "ConfigError", "RunConfig", "StudyConfig", "builtin_path", "load_config", "parse_config",
    "EmitError", "emit", "read_report", "to_csv", "to_dat", "write_atomic",
    "SCHEMA", "Gate", "StudyReport", "canonical_json", "StudyError", "run_study",
]
