"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not match what an operation requires."""


class NumericalFailure(ArithmeticError):
    """An iterative numerical routine failed (SVD, backtracking, divergence)."""


class FormatError(ValueError):
    """A checkpoint, image or data file is malformed."""


class ParseError(FormatError):
    """A text record could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class UndefinedMetricError(ValueError):
    """A metric has an empty index set or a zero denominator."""


class ValidationError(FormatError):
    """A well-formed record holds a value outside its allowed range."""
