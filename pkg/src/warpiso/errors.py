"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class WarpIsoError(Exception):
    """Base class for all library errors."""


class ConfigError(WarpIsoError, ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class SolverError(WarpIsoError, RuntimeError):
    """A numerical solver failed to converge (CLI exit code 3)."""


class QuadratureError(SolverError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ContractViolation(WarpIsoError, AssertionError):
    """A post-condition failed, e.g. a negative isoperimetric defect (CLI exit code 4)."""


class EmbeddingError(WarpIsoError, ValueError):
    """A graph perturbation is too large to stay embedded."""
