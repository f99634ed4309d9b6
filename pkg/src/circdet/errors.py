"""Exception hierarchy shared by all modules."""


class CircdetError(Exception):
    """Base class for all library errors."""


class InvalidCircle(CircdetError, ValueError):
    pass


class NonDifferentiablePoint(CircdetError, ArithmeticError):
    """Raised when a gradient is requested at a kink of the IoU surface."""


class ShapeError(CircdetError, ValueError):
    pass


class NonFiniteCost(CircdetError, ValueError):
    pass


class EmptyPredictions(CircdetError, ValueError):
    pass


class InvalidAssignment(CircdetError, ValueError):
    pass


class NonNormalizedAttention(CircdetError, ValueError):
    pass


class EmptyRegion(CircdetError, ValueError):
    pass


class MissingImage(CircdetError, KeyError):
    pass


class InfeasibleConfig(CircdetError, RuntimeError):
    pass


class FormatError(CircdetError, ValueError):
    """Malformed file content. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class TooLarge(CircdetError, ValueError):
    pass


class NonFiniteFunction(CircdetError, ArithmeticError):
    pass


class DivergedLoss(CircdetError, ArithmeticError):
    pass
