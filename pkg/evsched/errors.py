"""Exception hierarchy shared by the solver, the CLI and the web service."""


class EvschedError(Exception):
    """Base class for all errors raised by evsched."""


class InvalidInstanceError(EvschedError, ValueError):
    """Instance data violates the schema or a semantic rule."""


class InvalidFunctionError(EvschedError, ValueError):
    """A piecewise-linear function is malformed or not monotone where required."""


class IntegrationError(EvschedError):
    """The constant-voltage phase of a charging curve did not converge."""


class InvalidCurveError(EvschedError, ValueError):
    """A DoD-ACC curve yields a negative or non-convex wear density."""


class ScheduleError(EvschedError, ValueError):
    """A schedule leaves the battery window or is otherwise inconsistent."""


class DualSignError(EvschedError, ValueError):
    """A capacity dual has the wrong sign."""


class LpError(EvschedError):
    """The restricted master LP could not be solved."""


class BranchingError(EvschedError):
    """A fractional master solution has no binding capacity conflict."""


class OracleLimitError(EvschedError):
    """The DP oracle exceeded its state-space limit."""


class PricingLimitError(EvschedError):
    """The labeling search created more labels than allowed."""


class TimeLimitReached(EvschedError):
    """Raised inside the solver when the wall-clock budget is spent."""
