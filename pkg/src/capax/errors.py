"""Exception hierarchy shared by the library and the command line front end."""


class CapaxError(Exception):
    """Base class for all library errors."""


class GeometryError(CapaxError, ValueError):
    """Invalid surface parameters, unreadable or non-closed meshes."""


class SingularityError(CapaxError, ValueError):
    """Kernel evaluated at (or numerically at) its singular point."""


class NearFieldError(CapaxError, ValueError):
    """A target point lies closer to a surface than one local mesh width."""


class SingularSystemError(CapaxError, ArithmeticError):
    """A discretized integral system turned out (numerically) singular."""

    def __init__(self, message, condition=None, residual=None):
        super().__init__(message)
        self.condition = condition
        self.residual = residual


class ConfigError(CapaxError, ValueError):
    """Invalid run configuration."""
