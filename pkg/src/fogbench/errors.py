"""Exception hierarchy shared by all fogbench modules."""

from __future__ import annotations


class FogbenchError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FogbenchError, ValueError):
    """An argument lies outside the domain of a model equation."""


class ValidationError(FogbenchError, ValueError):
    """Invalid configuration or input data.

    ``path`` names the offending field (``sensors[1].gating.t_gate_ns``) or
    input location (``trace.csv:14``) when known.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NumericalError(FogbenchError, RuntimeError):
    """A numerical procedure failed to produce a usable result."""
