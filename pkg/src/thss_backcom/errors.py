"""Exception hierarchy shared by the analytic library, the simulator and the CLI."""

from __future__ import annotations


class BackcomError(Exception):
    """Base error for every failure raised by the package.

    ``code`` is a short machine-readable tag used by the CLI error line.
    """

    code = "backcom"

    def __init__(self, message: str, code: str | None = None):
        if code is not None:
            self.code = code
        super().__init__(message)


class DomainError(BackcomError, ValueError):
    """Argument outside the domain of a formula or special function."""

    code = "domain"


class ConfigError(BackcomError, ValueError):
    """Invalid configuration value; ``key`` names the offending field."""

    code = "config"

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(message)


class QuadratureError(BackcomError, ArithmeticError):
    """Adaptive quadrature stalled before reaching its tolerance."""

    code = "quadrature"


class ScenarioError(BackcomError, ValueError):
    """Unknown scenario, malformed sweep, or empty result set."""

    code = "scenario"
