# SPDX-License-Identifier: GPL-3.0-only
"""Errors raised by the pipeline, each carrying the CLI exit code it maps to."""

from typing import Optional


class PipelineError(Exception):
    """Base class for failures the CLI reports without a traceback."""

    exit_code = 1

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.key = key

    def __str__(self) -> str:
        if self.key:
            return f"{self.key}, {self.message}"
        return self.message


class ConfigError(PipelineError):
    """Invalid or unresolvable run configuration."""

    exit_code = 2


class DataError(PipelineError, ValueError):
    """Input data that cannot support the requested computation."""

    exit_code = 3


class NumericalError(PipelineError, ArithmeticError):
    """Non-finite states, failed fits and other numerical breakdowns."""

    exit_code = 4
