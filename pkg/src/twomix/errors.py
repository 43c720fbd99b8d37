"""Exception hierarchy shared by all estimators."""


class MixtureError(Exception):
    """Base class for every error raised by :mod:`twomix`."""


class InvalidMixture(MixtureError, ValueError):
    pass


class NonZeroMean(MixtureError, ValueError):
    pass


class DegenerateMeans(MixtureError, ValueError):
    pass


class DimensionMismatch(MixtureError, ValueError):
    pass


class SingularCovariance(MixtureError, ValueError):
    pass


class NonPositiveX4(MixtureError, ValueError):
    pass


class NegativeRadicand(MixtureError, ArithmeticError):
    pass


class NegativeDiscriminant(MixtureError, ArithmeticError):
    pass


class RecoveryFailure(MixtureError):
    """An estimator could not produce an answer from the data it was given."""


class TooFewSamples(RecoveryFailure):
    pass


class NoValidRoot(RecoveryFailure):
    """No candidate alpha passed the residual test.

    ``candidates`` lists ``(y, residual, reason)`` triples for diagnostics.
    """

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)


class MatchFailure(RecoveryFailure):
    pass


class NoSecondRoot(RecoveryFailure):
    pass
