"""Exception hierarchy.

Input problems derive from ``ValueError``; failed numerical invariants derive
from ``InvariantViolation``. The CLI maps the first family to exit code 2 and
the second to exit code 3.
"""


class SimplexLabError(Exception):
    pass


class InvariantViolation(SimplexLabError, ArithmeticError):
    """A computed result broke a property it is required to satisfy."""


class OverlapError(SimplexLabError, ValueError):
    pass


class AtomCapError(SimplexLabError, ValueError):
    pass


class NoWitnessError(SimplexLabError, ValueError):
    pass


class BoxTooSmallError(SimplexLabError, ValueError):
    pass


class ResolutionError(SimplexLabError, ValueError):
    pass


class MassCollapseError(InvariantViolation):
    pass


class DegenerateError(SimplexLabError, ValueError):
    pass


class EmptyIntersectionError(SimplexLabError, ValueError):
    pass


class SingularGramError(SimplexLabError, ValueError):
    pass


class NewtonError(InvariantViolation):
    pass


class ChartBoundaryError(InvariantViolation):
    pass


class OffVarietyError(SimplexLabError, ValueError):
    pass


class DisconnectedGraphError(SimplexLabError, ValueError):
    pass


class InadmissiblePartitionError(SimplexLabError, ValueError):
    pass


class InsufficientSpanError(SimplexLabError, ValueError):
    pass


class NormalizationError(InvariantViolation):
    pass


class UnderResolvedError(SimplexLabError, ValueError):
    pass


class BoxCoverageError(SimplexLabError, ValueError):
    pass


class ResolutionWarning(UserWarning):
    """A tolerance sits below the resolution of the data it is applied to."""
