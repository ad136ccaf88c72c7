"""Frequency dynamics for mixed synchronous/converter grids."""

from ._coidyn import (
    CaseValidationError,
    equivalents,
    error_index,
    simulate,
    sweep,
    validate,
)

__all__ = [
    "CaseValidationError",
    "equivalents",
    "error_index",
    "simulate",
    "sweep",
    "validate",
]
