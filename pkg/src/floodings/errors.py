"""Exception hierarchy shared by all modules.

Every error carries a short class name that the CLI prints verbatim, so the
names double as machine-readable reason codes.
"""


class FloodingError(Exception):
    """Base class for all library errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


class GraphError(FloodingError):
    pass


class ParseError(GraphError):
    pass


class EmptyGraph(GraphError):
    pass


class DisconnectedGraph(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class ParallelEdge(GraphError):
    pass


class NonpositiveLength(GraphError):
    pass


class InvalidPoint(GraphError):
    pass


class NotATree(GraphError):
    pass


class CoincidentPoints(FloodingError):
    pass


class BadPolicy(FloodingError):
    pass


class StallDetected(FloodingError):
    pass


class TimeOutOfRange(FloodingError):
    pass


class GraphMismatch(FloodingError):
    pass


class FormMismatch(FloodingError):
    pass


class ComponentNotArmAligned(FloodingError):
    pass


class InfeasibleM(FloodingError):
    pass


class TooLarge(FloodingError):
    pass


class BudgetExhausted(FloodingError):
    def __init__(self, message: str, draws: int = 0, accepted: int = 0):
        super().__init__(message)
        self.draws = draws
        self.accepted = accepted


class PartsMismatch(FloodingError):
    pass
