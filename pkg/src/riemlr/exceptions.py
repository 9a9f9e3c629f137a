"""Exception hierarchy shared by the geometry kernels and estimators."""


class RiemlrError(Exception):
    """Base class for all package errors."""


class DomainError(RiemlrError, ValueError):
    """Input lies outside the domain of a matrix function or manifold."""


class ParameterDomainError(RiemlrError, ValueError):
    """Metric parameters violate their admissible set."""


class ConvergenceError(RiemlrError, ArithmeticError):
    """A decomposition failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BranchError(DomainError):
    """Rotation angle too close to pi for an unambiguous logarithm."""


class DegenerateError(DomainError):
    """Quantity undefined at the given point (zero-norm normal, angle 0 or pi)."""


class UnsupportedOriginError(RiemlrError, NotImplementedError):
    """Parallel transport requested from an origin with no closed form."""


class DivergenceError(RiemlrError, FloatingPointError):
    """An optimizer step produced non-finite values."""

    def __init__(self, message, slot=None, epoch=None):
        super().__init__(message)
        self.slot = slot
        self.epoch = epoch
