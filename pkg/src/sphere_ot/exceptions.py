"""Exception hierarchy.

Errors split into two families so the command line can map them onto exit
codes: configuration problems (bad input, missing files) and numerical
failures (the data or the discretization could not be handled).
"""


class SphereOTError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SphereOTError, ValueError):
    """Invalid user configuration."""


class NumericalError(SphereOTError, ArithmeticError):
    """A numerical precondition failed or an iteration did not converge."""


# geometry
class AntipodalPoint(NumericalError):
    pass


class OutOfChart(NumericalError):
    pass


class ZeroVector(NumericalError):
    pass


# cloud
class BadCount(ConfigError):
    pass


class FileParse(ConfigError):
    pass


class DegenerateCloud(NumericalError):
    pass


class EmptyStencil(NumericalError):
    pass


# cost
class SingularCost(NumericalError):
    pass


class ZeroDensity(NumericalError):
    pass


# scheme
class NoAntipodalNeighbor(NumericalError):
    pass


# solver
class MassImbalance(NumericalError):
    pass


class NonConvergence(NumericalError):
    def __init__(self, message, best_residual=None, report=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.report = report


# lift
class BijectionFailure(NumericalError):
    pass


# harness
class AmplitudeTooLarge(NumericalError):
    pass
