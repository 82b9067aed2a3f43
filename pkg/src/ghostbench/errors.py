"""Exception types shared across the package."""


class GhostbenchError(Exception):
    """Base class for all ghostbench errors."""


class ConfigError(GhostbenchError):
    """Invalid configuration, geometry, file format, or violated precondition."""


class SolverError(GhostbenchError):
    """Numerical failure inside an iterative solver."""
