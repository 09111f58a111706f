"""Exception types shared across the package."""


class InsufficientResolution(ValueError):
    """A coefficient index lies beyond what the discretization resolves."""

    def __init__(self, index, max_index):
        self.index = index
        self.max_index = max_index
        super().__init__(
            f"insufficient resolution: index {index} requested, "
            f"maximum safe index is {max_index}"
        )


class ConvergenceError(ArithmeticError):
    """A numerical procedure failed to converge or lost accuracy."""


class OrthogonalityLoss(ConvergenceError):
    pass
