"""Exception hierarchy for the alnmml package."""


class AlnMmlError(Exception):
    """Base class for all errors raised by this package."""


class ParameterDomainError(AlnMmlError, ValueError):
    """A probability / parameter violates its domain constraints."""


class DegenerateInputError(AlnMmlError, ValueError):
    """Inputs too degenerate for the requested estimate (e.g. empty denominator)."""


class PrecisionError(AlnMmlError, ArithmeticError):
    """A numerically computed quantity left its valid range (e.g. a Fisher
    determinant that should be positive came out non-positive)."""


class ConvergenceError(AlnMmlError, ArithmeticError):
    """An iterative numerical procedure failed to converge."""


class ConversionError(AlnMmlError, ArithmeticError):
    """A scoring-matrix -> stochastic-matrix conversion could not reach its
    calibration target, or produced unusable matrix roots."""


class MatrixFormatError(AlnMmlError, ValueError):
    """A matrix / frequency / alpha file could not be parsed."""


class BenchmarkFormatError(AlnMmlError, ValueError):
    """A benchmark file is malformed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CorruptRecordError(AlnMmlError, ValueError):
    """An alignment record failed its internal bookkeeping invariants."""


class IncompleteBundleError(AlnMmlError, ValueError):
    """A ModelBundle lacks per-alignment parameters required by the caller."""
