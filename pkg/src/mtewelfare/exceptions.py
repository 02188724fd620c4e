"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid model parameters, configuration key or unsupported option."""


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


class EmptyArm(DomainError):
    """A covariate cell has no treated or no untreated observations."""


class SingularDesign(ArithmeticError):
    """Gram matrix fails the relative minimum-eigenvalue test."""

    def __init__(self, min_eigenvalue, trace, tol):
        self.min_eigenvalue = min_eigenvalue
        self.trace = trace
        super().__init__(
            f"singular design: min eigenvalue {min_eigenvalue:.3e} "
            f"< {tol:g} * trace ({trace:.3e})"
        )


class UnsupportedDimension(ValueError):
    """Linear-score policies are only enumerated exactly up to dimension 3."""


class HarnessError(RuntimeError):
    """A Monte Carlo experiment could not be completed."""
