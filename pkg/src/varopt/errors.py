"""Exception types shared across the package."""


class VaroptError(Exception):
    """Base class for all varopt errors."""


class InvalidSpec(VaroptError):
    """A graph spec, problem spec, or config violates its invariants."""


class DisconnectedGraph(VaroptError):
    """An edge-deletion graph came out disconnected on the truncation."""


class OutOfBox(VaroptError):
    """A vertex lies outside the truncation box of the graph."""


class InvalidExponent(VaroptError):
    """An exponent is outside the admissible range of the operation."""


class NotConverged(VaroptError):
    """A solve that was required to converge did not."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class TooLarge(VaroptError):
    """The graph exceeds the size limit of the exhaustive oracle."""


class InvalidRange(VaroptError):
    """A bisection range is empty or touches nonpositive masses."""


class InconclusiveProbe(VaroptError):
    """A bisection probe could not be classified (solver did not converge)."""


class MissingColumns(VaroptError):
    """A results file lacks the columns required for the requested plot kind."""
