"""Exception types shared across the package."""


class ConstantRankError(RuntimeError):
    """Symbol rank at some direction is inconsistent with the expected constant rank."""


class SolverError(RuntimeError):
    """An iterative solve failed to reach its tolerance.

    Carries the final relative residual in ``residual``.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResolutionError(RuntimeError):
    """A requested construction is unreachable at the current grid resolution."""
