"""Exceptions used in the package.

Every error raised on purpose by :py:mod:`perchs` derives from
:py:class:`PerchsError`. The command line maps the families to exit codes:
:py:class:`ConfigError` gives 2, solver side failures give 3.

License and Copyright
---------------------

ASL 2.0
"""


class PerchsError(Exception):
    """PerchsError"""


class GeometryError(PerchsError):
    """Domain generation or region rasterization failed."""


class SolverError(PerchsError):
    """SolverError"""


class ConvergenceError(SolverError):
    """An iterative solver hit its iteration cap.

    Attributes:
        iterations - iterations performed
        residual   - last relative residual (or update size)
    """
    def __init__(self, message, iterations=None, residual=None):
        super(ConvergenceError, self).__init__(message)
        self.iterations = iterations
        self.residual = residual


class InnerIterationError(SolverError):
    """Fixed point active set iteration cycled or ran out of iterations."""


class ProbeError(PerchsError):
    """A probe could not gather the data it needs."""


class CapacityError(PerchsError):
    """CapacityError"""


class ConfigError(PerchsError):
    """Invalid experiment configuration; the message names the field."""


class SchemaError(PerchsError):
    """Metrics files do not share the same CSV schema."""


class QueueError(PerchsError):
    """QueueError"""


class QueueLockError(QueueError):
    """QueueLockError"""
