"""Scenario harness: configuration, pipelines and the ``projlab`` command."""

from .cli import main, run_to_directory
from .config import ConfigError, load, validate
from .pipelines import PIPELINES, run_pipeline
from .scenarios import BUILTIN, builtin, list_ids

__all__ = ["BUILTIN", "ConfigError", "PIPELINES", "builtin", "list_ids", "load", "main",
           "run_pipeline", "run_to_directory", "validate"]
