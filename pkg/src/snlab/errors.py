"""Exception hierarchy shared by every snlab module."""


class SNLabError(Exception):
    """Base class for all snlab errors."""


class InvalidFieldError(SNLabError, ValueError):
    """Empty, mis-shaped or non-finite field samples."""


class ShapeError(SNLabError, ValueError):
    pass


class GridMismatchError(SNLabError, ValueError):
    pass


class DomainError(SNLabError, ValueError):
    """A query point lies outside a non-periodic domain."""


class StencilError(SNLabError, ValueError):
    """A finite-difference stencil does not fit inside the sampled region."""


class SingularReparamError(SNLabError, ZeroDivisionError):
    pass


class ConstraintViolation(SNLabError, ValueError):
    """A group element fails one of its defining identities."""


class ProjectiveSingularity(SNLabError, ZeroDivisionError):
    pass


class UnsupportedDimensionError(SNLabError, ValueError):
    pass


class ConfigError(SNLabError, ValueError):
    pass


class SolverError(SNLabError, RuntimeError):
    def __init__(self, message, *, step=None, iterations=None):
        super().__init__(message)
        self.step = step
        self.iterations = iterations


class ExpressionError(SNLabError, ValueError):
    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position
