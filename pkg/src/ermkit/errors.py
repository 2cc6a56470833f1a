"""Exception hierarchy shared by all modules."""


class ErmError(Exception):
    """Base class for every error raised by this package."""


class InvalidScm(ErmError):
    pass


class UnknownVariable(ErmError):
    pass


class ValueOutOfDomain(ErmError):
    pass


class StateSpaceTooLarge(ErmError):
    pass


class ZeroProbabilityEvidence(ErmError):
    pass


class DomainMismatch(ErmError):
    pass


class NonMonotonicTimestamp(ErmError):
    pass


class PersistenceFailure(ErmError):
    pass


class NoInterventionRecords(ErmError):
    pass


class InvalidParameter(ErmError):
    pass


class NoEvidence(ErmError):
    pass


class InsufficientWindow(ErmError):
    pass


class SourceFailure(ErmError):
    pass


class NoEpisodes(ErmError):
    pass


class CompensationFailure(ErmError):
    """A compensating action itself failed; the transaction is poisoned.

    Carries the partial execution trace so the caller can inspect how far
    the rollback got. Never swallowed into a silent commit.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class EmptySwarm(ErmError):
    pass


class AllUnparseable(ErmError):
    pass


class InvalidCounts(ErmError):
    pass


class NoFailures(ErmError):
    pass
