"""Exception hierarchy.

Instance-level problems subclass :class:`InstanceError` (CLI exit code 2),
numerical breakdowns subclass :class:`SolverFailure` (exit code 3).
"""


class ConicMarketError(Exception):
    pass


class InstanceError(ConicMarketError, ValueError):
    pass


class DuplicateId(InstanceError):
    pass


class DanglingParent(InstanceError):
    pass


class ProbabilityNotStochastic(InstanceError):
    pass


class LeafAtWrongTime(InstanceError):
    pass


class NodeIsLeaf(ConicMarketError, ValueError):
    pass


class DimensionMismatch(ConicMarketError, ValueError):
    pass


class NonPositiveEntry(InstanceError):
    pass


class BadDiagonal(InstanceError):
    pass


class EpsilonOutOfRange(ConicMarketError, ValueError):
    pass


class EmptyEpsilonList(ConicMarketError, ValueError):
    pass


class GeneratorFormCone(ConicMarketError, ValueError):
    pass


class NotAdmissible(ConicMarketError, ValueError):
    pass


class PreconditionViolated(ConicMarketError, ValueError):
    pass


class InconsistentCandidate(ConicMarketError, ValueError):
    pass


class NoFiniteCandidate(ConicMarketError, ValueError):
    pass


class UnsupportedVariant(ConicMarketError, ValueError):
    pass


class SolverFailure(ConicMarketError, RuntimeError):
    pass


class NumericalFailure(SolverFailure):
    pass


class Infeasible(ConicMarketError):
    pass


class Unbounded(ConicMarketError):
    pass


class BadParams(ConicMarketError, ValueError):
    pass
