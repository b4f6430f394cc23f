"""Exception hierarchy.

Validation problems (bad input) and numerical problems (a solver that did not
converge) are kept apart because the CLI maps them to different exit codes.
"""


class BlockSpinError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BlockSpinError, ValueError):
    """Input violates a documented invariant."""


class AsymmetricMatrix(ValidationError):
    pass


class NotPositiveDefinite(ValidationError):
    def __init__(self, smallest_eigenvalue: float):
        self.smallest_eigenvalue = float(smallest_eigenvalue)
        super().__init__(
            f"NotPositiveDefinite: smallest eigenvalue of A is {self.smallest_eigenvalue:.6g}"
        )


class EmptyBlock(ValidationError):
    pass


class DomainError(ValidationError):
    """Argument outside the closed (or open) cube where a function is defined."""


class TooLarge(ValidationError):
    def __init__(self, states: int, cap: int):
        self.states = int(states)
        self.cap = int(cap)
        super().__init__(f"TooLarge: enumeration needs {self.states} states (cap {self.cap})")


class RegimeError(ValidationError):
    """Operation requires a temperature regime or structure the model lacks."""


class NotHighTemperature(RegimeError):
    pass


class NotCritical(RegimeError):
    pass


class NonSimpleTopEigenvalue(RegimeError):
    pass


class NotUniform(RegimeError):
    pass


class NotInvertible(RegimeError):
    pass


class NotACriticalPoint(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


class NumericalError(BlockSpinError, ArithmeticError):
    """An iterative numerical routine failed."""


class EigSolverFailure(NumericalError):
    pass


class QuadratureNonConvergence(NumericalError):
    pass


class LeftDomain(NumericalError):
    pass


class NoConvergence(NumericalError):
    """Iteration budget exhausted; carries the best iterate seen."""

    def __init__(self, message, best_x=None, residual=float("nan")):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual
