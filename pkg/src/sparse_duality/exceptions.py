"""Exception hierarchy shared by all solvers."""


class SparseDualityError(Exception):
    """Base class for errors raised by this package."""


class NotPositiveDefinite(SparseDualityError, ValueError):
    """The marginal covariance lambda*I + Phi Gamma Phi^T is singular."""


class NonConvergence(SparseDualityError, RuntimeError):
    """An iterative routine hit its iteration cap before meeting tolerance.

    The partial result (if any) is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DegenerateUpdate(SparseDualityError, ArithmeticError):
    """A fixed-point update produced a non-positive denominator."""


class SingularSystem(SparseDualityError, ValueError):
    """A weight system could not be inverted, even by pseudo-inverse."""


class InfeasibleConstraint(SparseDualityError, ValueError):
    """The equality constraint y = Phi x has no solution."""


class GenerationFailure(SparseDualityError, RuntimeError):
    """Random generation did not satisfy its constraints after all retries."""


class ConfigurationError(SparseDualityError, ValueError):
    """An experiment or solver configuration is invalid."""
