"""Exception hierarchy shared by all modules."""


class VolterraSteinError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VolterraSteinError, ValueError):
    """Invalid user configuration (maps to CLI exit code 2)."""


class DomainError(VolterraSteinError, ValueError):
    """Input outside the mathematical domain of an operation (exit code 3)."""


class SingularMatrixError(DomainError):
    """LU factorization met an exactly zero pivot."""

    def __init__(self, message: str, pivot: int):
        super().__init__(f"{message} (pivot index {pivot})")
        self.pivot = pivot


class DefinitenessError(DomainError):
    """A matrix expected to be positive definite is not."""

    def __init__(self, message: str, eigenvalue: float):
        super().__init__(f"{message} (offending eigenvalue {eigenvalue:.6e})")
        self.eigenvalue = eigenvalue


class NumericalError(VolterraSteinError, RuntimeError):
    """Iteration or quadrature failed to converge."""


class InconsistencyError(NumericalError):
    """Two quantities that must agree (e.g. k from det and phi) do not."""
