"""Exception hierarchy shared by all lgflow modules."""


class LGFlowError(Exception):
    """Base class for every error raised by lgflow."""


class InvalidParam(LGFlowError, ValueError):
    pass


class InvalidConfig(LGFlowError, ValueError):
    pass


class NotDifferentiable(LGFlowError, ArithmeticError):
    """Gradient requested at a kink of a non-smooth integrand."""


class GridMismatch(LGFlowError, ValueError):
    pass


class ShapeMismatch(LGFlowError, ValueError):
    pass


class EmptySeries(LGFlowError, ValueError):
    pass


class MissingDual(LGFlowError, ValueError):
    pass


class CylinderOutOfDomain(LGFlowError, ValueError):
    pass


class NonConvergence(LGFlowError, RuntimeError):
    """Inner solver hit ``max_iters``; the best iterate is attached."""

    def __init__(self, message, best=None, step_index=None):
        super().__init__(message)
        self.best = best
        self.step_index = step_index


class InsufficientLevels(LGFlowError, RuntimeError):
    """The level-set iteration did not drive its excess to zero."""
