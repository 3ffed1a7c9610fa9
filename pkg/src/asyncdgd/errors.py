"""Exception types raised across the package."""


class AsyncDGDError(Exception):
    """Base class for all package errors."""


class DimensionError(AsyncDGDError, ValueError):
    """Shapes of block vectors, oracles or matrices do not agree."""


class ParameterError(AsyncDGDError, ValueError):
    """An argument is outside its admissible range."""


class TopologyError(AsyncDGDError, ValueError):
    """A graph or averaging matrix violates connectivity or weight rules."""


class ConfigError(AsyncDGDError, ValueError):
    """An algorithm or experiment configuration is invalid."""


class ProtocolError(AsyncDGDError, RuntimeError):
    """A block update received the wrong set of neighbour inputs."""


class ScheduleError(AsyncDGDError, ValueError):
    """A schedule references iterates that cannot exist."""


class PreconditionError(AsyncDGDError, ValueError):
    """A documented precondition of an analysis routine is not met."""
