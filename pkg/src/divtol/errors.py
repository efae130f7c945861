"""Exception hierarchy shared across the package.

Every error raised by divtol derives from :class:`DivtolError`, so callers
(notably the CLI) can map failures onto exit codes without matching on
message strings.
"""

from __future__ import annotations


class DivtolError(Exception):
    """Base error for this package."""


class InputError(DivtolError, ValueError):
    """Inputs violate an operation's contract (shape, domain, finiteness)."""


class EstimationError(DivtolError):
    """The dataset cannot support estimation (e.g. a group is missing)."""


class DegenerateObjectiveError(EstimationError):
    """The objective has no curvature in theta; the minimizer is undefined."""


class InferenceError(DivtolError):
    """Resampling inference failed (too many degenerate replicates)."""


class StudyError(DivtolError):
    """A simulation study produced no usable replicates."""


class ConfigurationError(DivtolError):
    """Invalid configuration (bad flags, impossible sampler settings)."""


class ParseError(DivtolError):
    """A file could not be parsed.

    Carries the 1-based line number when known.
    """

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SchemaError(ParseError):
    """File structure disagrees with the declared layout."""


class DataError(DivtolError):
    """Parsed values are structurally valid but semantically inadmissible."""


class LinkageError(DataError):
    """Records cannot be joined across input files."""
