"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can emit a
single ``code: message`` line on failure.
"""

from __future__ import annotations


class HubnetError(ValueError):
    code = "HUBNET_ERROR"


class ParseError(HubnetError):
    code = "PARSE_ERROR"

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateKeyError(ParseError):
    code = "DUPLICATE_KEY"


class MissingCellError(HubnetError):
    code = "MISSING_CELL"


class UndefinedCellError(HubnetError):
    """Raised when a caller reads an undefined (diagonal) cell as a number."""

    code = "UNDEFINED_CELL"


class RangeError(HubnetError):
    code = "OUT_OF_RANGE"


class NonFiniteError(HubnetError):
    code = "NON_FINITE"


class DegenerateSpectrumError(HubnetError):
    code = "DEGENERATE_SPECTRUM"


class ConvergenceError(HubnetError):
    code = "NO_CONVERGENCE"


class NormalizationError(HubnetError):
    code = "NORMALIZATION"
