"""Exception types raised across the package."""


class ShadowsError(Exception):
    """Base class for all package errors."""


class DimensionCapExceeded(ShadowsError, ValueError):
    pass


class LengthMismatch(ShadowsError, ValueError):
    pass


class DimensionMismatch(ShadowsError, ValueError):
    pass


class InvalidState(ShadowsError, ValueError):
    pass


class NotHermitian(ShadowsError, ValueError):
    pass


class NotInformationallyComplete(ShadowsError, ValueError):
    pass


class InvalidPovm(ShadowsError, ValueError):
    pass


class NotEnumerable(ShadowsError, ValueError):
    pass


class IdentityPauli(ShadowsError, ValueError):
    pass


class IdentityTermPresent(ShadowsError, ValueError):
    pass


class OutcomeOutOfRange(ShadowsError, IndexError):
    pass


class UnknownRule(ShadowsError, ValueError):
    pass


class EmptyTrajectory(ShadowsError, ValueError):
    pass


class EmptyRecord(ShadowsError, ValueError):
    pass


class NonNormalizedBornDistribution(ShadowsError, RuntimeError):
    pass


class NegativeThreshold(ShadowsError, ValueError):
    pass


class NonPositiveInput(ShadowsError, ValueError):
    pass


class InvalidProbability(ShadowsError, ValueError):
    pass


class TooFewRounds(ShadowsError, ValueError):
    pass


class IncompleteKraus(ShadowsError, ValueError):
    pass


class EnsembleNotBalanced(ShadowsError, ValueError):
    pass


class RecordIOError(ShadowsError, OSError):
    """A record file is unreadable, truncated or malformed."""


class SchemaVersionMismatch(RecordIOError):
    pass


class ConfigInvalid(ShadowsError, ValueError):
    """Experiment configuration failed validation.

    ``errors`` maps a dotted field path to a human readable message.
    """

    def __init__(self, errors):
        self.errors = dict(errors)
        msg = "; ".join(f"{k}: {v}" for k, v in self.errors.items())
        super().__init__(msg or "invalid configuration")
