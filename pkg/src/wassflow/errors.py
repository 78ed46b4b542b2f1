"""Exception hierarchy.

Every numerical failure derives from :class:`NumericalError`; every rejected
input derives from :class:`InvalidInputError`. The CLI maps the two families to
distinct exit codes.
"""


class WassflowError(Exception):
    """Base class for all package errors."""


class InvalidInputError(WassflowError, ValueError):
    """A constructor or operation received arguments violating its contract."""


class OutOfDomainError(InvalidInputError):
    def __init__(self, value, a, b):
        super().__init__(f"position {value!r} lies outside the grid [{a}, {b}]")
        self.value = value


class InvalidScheduleError(InvalidInputError):
    pass


class WrongPatternError(InvalidInputError):
    pass


class NumericalError(WassflowError):
    """Raised when a computation cannot produce a trustworthy result."""


class NormalizationError(NumericalError):
    pass


class SupportMismatchError(NumericalError):
    pass


class DegenerateDensityError(NumericalError):
    pass


class LowDensityError(NumericalError):
    def __init__(self, message, particle=None):
        super().__init__(message)
        self.particle = particle


class StabilityError(NumericalError):
    def __init__(self, dt, bound):
        super().__init__(f"time step {dt:.6g} exceeds the stable bound {bound:.6g}")
        self.dt = dt
        self.bound = bound


class ShockEncounteredError(NumericalError):
    def __init__(self, time, message=None):
        super().__init__(message or f"characteristics cross at t={time:.6g}")
        self.time = time


class ConvergenceError(NumericalError):
    def __init__(self, message, last_objective):
        super().__init__(f"{message} (last objective {last_objective:.12g})")
        self.last_objective = last_objective


class MonotonicityError(NumericalError):
    pass


class DegenerateTargetError(NumericalError):
    pass


class GrowthError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


class IncompleteTrajectoryError(NumericalError):
    pass
