"""Exception hierarchy.

Every error raised by the package derives from :class:`DacnnError`, which is a
``ValueError`` so that generic callers (and scikit-learn's parameter
validation) treat it as bad input.
"""


class DacnnError(ValueError):
    pass


class FormatError(DacnnError):
    """Malformed file or byte buffer."""


class BadMagic(FormatError):
    pass


class Truncated(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class DimensionMismatch(FormatError):
    pass


class CountMismatch(FormatError):
    pass


class LabelOutOfRange(DacnnError):
    pass


class NegativeSigma(DacnnError):
    pass


class EmptyResult(DacnnError):
    pass


class ShapeMismatch(DacnnError):
    pass


class NoForwardState(DacnnError, RuntimeError):
    pass


class QOutOfRange(DacnnError):
    pass


class POutOfRange(DacnnError):
    pass


class ConfigError(DacnnError):
    pass


class EmptyRecords(DacnnError):
    pass


class DegenerateVariance(DacnnError):
    pass


class TauOutOfRange(DacnnError):
    pass


class DegenerateDesign(DacnnError):
    pass


class TooFewPoints(DacnnError):
    pass


class SparseInterval(DacnnError):
    pass


class NoBinsInInterval(DacnnError):
    pass


class NumericalFailure(DacnnError, ArithmeticError):
    """Training produced a non-finite loss."""
