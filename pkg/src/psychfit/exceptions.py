"""Exception types raised by psychfit."""


class PsychfitError(Exception):
    """Base class for all psychfit errors."""


class ParseError(PsychfitError, ValueError):
    """Malformed input file. Carries the 1-based line and the column name when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConfigurationError(PsychfitError, ValueError):
    """Inconsistent answer key, factor structure or options."""


class AnalysisError(PsychfitError, ValueError):
    """An analysis cannot be carried out on the given data."""


class ConvergenceError(PsychfitError, RuntimeError):
    """An iterative estimator stopped without meeting its convergence criteria."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class ModelIdentificationError(ConfigurationError):
    """The requested factor model has negative degrees of freedom."""
