"""Config-driven experiment suites with deterministic JSON/CSV outputs."""
from .cli import main, run_suite
from .config import SUITES, ConfigError, resolve
from .records import audit

__all__ = ["main", "run_suite", "SUITES", "ConfigError", "resolve", "audit"]
