"""Exception and warning types shared across the package."""


class PedPredError(Exception):
    """Base class for all errors raised by this package."""


# --- map documents and road graphs ---


class MapDocumentError(PedPredError, ValueError):
    """A map or config document violates the format contract."""


class InvalidDocument(MapDocumentError):
    pass


class DuplicateId(MapDocumentError):
    pass


class DanglingEndpoint(MapDocumentError):
    pass


class NonPositiveReferenceSpeed(MapDocumentError):
    pass


class DisconnectedGraph(MapDocumentError):
    """Raised only when the caller requires a connected graph."""


class DisconnectedGraphWarning(UserWarning):
    """Default, non-fatal signal for a graph with more than one component."""


class UnknownNode(PedPredError, KeyError):
    pass


class UnknownEdge(PedPredError, KeyError):
    pass


class OutOfRange(PedPredError, ValueError):
    """An arc-length or index argument lies outside its valid interval."""


# --- regulators and numerics ---


class BadWeights(PedPredError, ValueError):
    """Cost weights fail positivity requirements."""


class NoConvergence(PedPredError, ArithmeticError):
    """An iterative solver hit its iteration budget before the tolerance."""


class NotStabilizable(PedPredError, ArithmeticError):
    """No stabilizing feedback exists, or the Riccati recursion diverged."""


class SingularInnerMatrix(PedPredError, ArithmeticError):
    """The input-side inner matrix is numerically singular."""


class BranchBudgetExceeded(PedPredError, RuntimeError):
    """More branch hypotheses were requested than the configured budget."""


# --- semantic grids and policies ---


class GoalOffWalkable(PedPredError, ValueError):
    """A goal rasterizes onto a cell pedestrians should not stand on."""


class AllActionsBlocked(PedPredError, RuntimeError):
    """Every action from a cell leads off-grid or into an obstacle."""


# --- trajectory data and evaluation ---


class TrajectoryDataError(PedPredError):
    pass


class MalformedRow(TrajectoryDataError):
    pass


class NonMonotoneTime(TrajectoryDataError):
    pass


class TooShort(TrajectoryDataError):
    """A trajectory has too few samples for state estimation."""


class NoValidWindows(TrajectoryDataError):
    """No (trajectory, start) pair supports the requested horizons."""


class InsufficientSamples(TrajectoryDataError):
    """Too few rollouts to form the requested statistics."""
