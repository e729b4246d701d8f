"""Exception types raised by the numerical routines."""


class SplittingError(RuntimeError):
    """Base class for failures of a splitting computation."""


class DegeneracyError(SplittingError):
    """A frame, plane or intersection lost rank.

    ``value`` carries the offending angle or singular value.
    """

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class NonConvergenceError(SplittingError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(SplittingError):
    """A truncated series stopped decaying."""

    def __init__(self, message, ratio=None, block=None):
        super().__init__(message)
        self.ratio = ratio
        self.block = block


class MisalignedSplittingError(SplittingError):
    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class ChartOverflowError(SplittingError):
    """Graph coordinates left the unit ball; the finite-difference step is too large."""


class BoundViolation(ValueError):
    """Parameters outside the range where the map is a valid diffeomorphism."""
