"""Exception hierarchy.

Every stochastic cap or budget failure derives from :class:`CapExceeded` so the
CLI can map them to a single exit status.
"""


class HamcondError(Exception):
    """Base class for package errors."""


# graph-core
class LoopPresent(HamcondError, ValueError):
    pass


class ParallelPresent(HamcondError, ValueError):
    pass


class EdgeListFormatError(HamcondError, ValueError):
    pass


# sampler
class DomainError(HamcondError, ValueError):
    pass


class NotParallelPair(HamcondError, ValueError):
    pass


class NotLoop(HamcondError, ValueError):
    pass


class TargetIsLoop(HamcondError, ValueError):
    pass


class CapExceeded(HamcondError, RuntimeError):
    """A retry/attempt/time budget ran out; the caller should resample."""


class NonConvergence(CapExceeded):
    pass


class AttemptCapExceeded(CapExceeded):
    pass


class SanitizeStalled(CapExceeded):
    pass


class ResampleRequired(CapExceeded):
    """Input lies outside the switching calculus (an edge repeated 3+ times)."""


# hamilton-engine
class EngineFailure(HamcondError, RuntimeError):
    pass


class PartitionDegenerate(EngineFailure):
    pass


class NoPerfectMatching(EngineFailure):
    pass


class Phase2Failure(EngineFailure):
    pass


class Phase3Failure(EngineFailure):
    pass


# oracle
class BudgetExhausted(CapExceeded):
    pass


class TooLarge(HamcondError, ValueError):
    pass
