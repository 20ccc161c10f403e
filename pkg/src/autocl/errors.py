"""Error taxonomy shared by the library, the service, and the CLI.

Each error class carries the process exit code the CLI maps it to, so the
service layer and the client agree on failure categories without string
matching.
"""

from __future__ import annotations


class AutoCLError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    kind = "error"


class ConfigError(AutoCLError):
    """Invalid configuration or strategy (off-grid value, bad option, bad flag)."""

    exit_code = 2
    kind = "config"


class DataError(AutoCLError):
    """Unreadable or malformed dataset input."""

    exit_code = 3
    kind = "data"


class NumericError(AutoCLError):
    """Non-finite value or other numeric failure inside the tensor engine."""

    exit_code = 4
    kind = "numeric"
