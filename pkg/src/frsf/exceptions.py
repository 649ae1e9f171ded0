"""Exception hierarchy shared across the package.

Most errors subclass ``ValueError`` so callers that only know about the
standard library can still catch them.
"""


class FRSFError(ValueError):
    """Base class for all package-specific errors."""


class CsvParseError(FRSFError):
    """A CSV row failed to parse; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(FRSFError):
    """Header or column layout of an input file is unusable."""


class ValidationError(FRSFError):
    """A record violates a data invariant."""


class CensoringConsistencyError(ValidationError):
    """A subject has measurements after its event/censoring time."""


class MissingSeriesError(ValidationError):
    """A subject has outcomes but no longitudinal observations."""


class DomainError(FRSFError):
    """Evaluation requested outside a curve's or model's domain."""


class TruncationDomainError(DomainError):
    """Evaluation past a subject's event/censoring time."""


class DimensionError(FRSFError):
    """Mismatched or empty array dimensions."""


class DegenerateSeriesError(FRSFError):
    """A subject's series cannot support the requested fit."""


class SparseSupportError(FRSFError):
    """Too few points in the kernel support even after widening."""


class BandwidthSelectionError(FRSFError):
    """No bandwidth candidate produced a usable smooth."""


class ResolutionError(FRSFError):
    """Grid step too coarse to place any node inside a subject's domain."""


class DegenerateModelError(FRSFError):
    """Model has no usable components (e.g. no positive eigenvalues)."""


class ConditioningError(FRSFError):
    """A linear system stayed numerically singular after regularization."""


class EmptySampleError(FRSFError):
    """Survival estimator called on an empty sample."""


class DegenerateSplitError(FRSFError):
    """Log-rank statistic requested for an empty group."""


class UnlearnableError(FRSFError):
    """Training data contains no events; no survival signal to fit."""


class CoverageError(FRSFError):
    """A subject is out-of-bag for no tree; increase the ensemble size."""


class EvaluabilityError(FRSFError):
    """A metric is undefined at the requested time (censoring mass exhausted)."""


class UndefinedConcordanceError(FRSFError):
    """No comparable pairs; the concordance index is undefined."""
