"""Typed errors shared across the package."""
from __future__ import annotations

__all__ = [
    "DegenerateModelError",
    "SupportCapExceeded",
    "RejectionCapExceeded",
    "ConfigError",
]


class DegenerateModelError(ValueError):
    """A construction's defining weights are degenerate.

    Raised when a coupling cannot be formed: zero variance for zero biasing,
    zero mean for size biasing, or an all-zero weight table.
    """


class SupportCapExceeded(ValueError):
    """An exact enumeration was requested beyond the configured cap."""


class RejectionCapExceeded(RuntimeError):
    """A rejection-sampling loop hit its iteration cap (likely a near-zero
    acceptance probability, signalling a degenerate direction)."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
