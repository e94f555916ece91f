"""Exception types raised by the estimators and signal tools.

Two families exist so that callers (the CLI in particular) can tell bad
input apart from a numerical breakdown on otherwise valid input.
"""


class SngemError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SngemError, ValueError):
    """Input violates a documented invariant."""


class NumericalError(SngemError, ArithmeticError):
    """Valid input on which the numerical pipeline cannot proceed."""


# --- input / data errors -------------------------------------------------

class FrequencyOutOfBand(ValidationError):
    pass


class ZeroPowerSignal(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class RecordFormatError(ValidationError):
    """Malformed dual-channel signal file."""


# --- numerical failures --------------------------------------------------

class AmplitudeOutOfRange(NumericalError):
    pass


class NonPositiveFrequency(NumericalError):
    pass


class AllZeroSpectrum(NumericalError):
    pass


class RankDeficientTruncation(NumericalError):
    pass


class EigenSolverFailure(NumericalError):
    pass


class EigenvalueCollision(NumericalError):
    pass


class DegenerateRayleighDenominator(NumericalError):
    pass


class IllConditionedBasis(NumericalError):
    pass


class OrderCollapse(NumericalError):
    pass


class DegenerateWindows(NumericalError):
    pass


class ZeroReference(NumericalError):
    pass
