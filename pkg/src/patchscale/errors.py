"""Exception types shared across the pipeline, mapped to CLI exit codes."""

from __future__ import annotations


class PatchscaleError(Exception):
    """Base class for all library errors."""


class DataError(PatchscaleError):
    """Malformed or unusable input data (CLI exit code 2)."""


class NumericalError(PatchscaleError):
    """Degenerate data or a failed estimator (CLI exit code 3)."""
