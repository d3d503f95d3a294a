"""Exception types raised across the package."""


class SingularCollocationError(ValueError):
    """Collocation (or truncated inverse) factor is singular or numerically so."""


class DemkoConvergenceError(RuntimeError):
    """The equioscillation iteration did not converge or lost extrema."""


class NegativeWeightsError(ValueError):
    """A quadrature rule has negative weights where positivity is required."""

    def __init__(self, message, weights=None):
        super().__init__(message)
        self.weights = weights


class IndefinitePairError(ValueError):
    """A symmetric pencil is not definite (a common isotropic vector exists)."""


class IndefiniteMassError(ValueError):
    """Explicit or modal time integration requested with an indefinite mass."""


class ResonanceError(ValueError):
    """Forcing frequency coincides with a discrete eigenfrequency."""


class CFLViolationError(ValueError):
    """Time step at or above the stability limit."""
