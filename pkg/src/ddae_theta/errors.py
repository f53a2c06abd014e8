"""Exception hierarchy shared by all modules."""


class DdaeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(DdaeError, ValueError):
    """Invalid user-supplied configuration (bounds, resolution, flags)."""


class PoleError(DdaeError, ZeroDivisionError):
    """The Theta-method denominator 1 - a*h*(1 - theta) vanishes."""


class DimensionError(DdaeError, ValueError):
    pass


class NoConvergence(DdaeError):
    """Newton iteration did not reach tolerance.

    ``step`` is the failing step index when raised from a simulation.
    """

    def __init__(self, message, *, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual


class SingularJacobian(DdaeError):
    pass


class SingularIteration(NoConvergence):
    """Newton matrix numerically singular during a time step."""


class JacobianError(DdaeError):
    pass


class EigensolveError(DdaeError):
    pass


class ConvergenceError(DdaeError):
    """Nonlinear eigenpair refinement failed; carries the unrefined root."""

    def __init__(self, message, *, root=None, residual=None):
        super().__init__(message)
        self.root = root
        self.residual = residual


class DegenerateSpectrum(DdaeError):
    pass


class NoSignChange(DdaeError):
    """The damping mismatch does not change sign over the theta range."""

    def __init__(self, message, *, endpoints=None):
        super().__init__(message)
        self.endpoints = endpoints


class TrackingLost(DdaeError):
    pass
