"""Exception hierarchy shared by all reconstruction modules."""


class ReconError(Exception):
    """Base class for errors raised by mrirecon."""


class DimensionError(ReconError, ValueError):
    """Array shapes do not match the operator grid."""


class ConfigurationError(ReconError, ValueError):
    """Inconsistent or invalid configuration (mask, coils, step sizes, ...)."""


class UnsupportedOperationError(ReconError, NotImplementedError):
    """The requested operation has no implementation for these inputs."""


class SolverError(ReconError, RuntimeError):
    """An iterative solver failed (NaN, divergence)."""


class InvariantError(SolverError):
    """A guaranteed solver property (e.g. cost monotonicity) was violated."""
