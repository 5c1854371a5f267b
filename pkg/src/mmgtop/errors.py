class ConfigurationError(ValueError):
    """Raised for inconsistent inputs (bad divisibility, missing Dirichlet data, ...)."""


class SolverError(RuntimeError):
    """Raised when a linear or eigen solve breaks down."""
