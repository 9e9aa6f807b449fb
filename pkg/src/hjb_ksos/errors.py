"""Exception types shared across the package."""


class HjbKsosError(Exception):
    """Base class for all errors raised by hjb_ksos."""


class ParameterError(HjbKsosError):
    """Invalid static input: bad shapes, non-PD weights, empty boxes."""


class DomainError(HjbKsosError):
    """Evaluation requested outside the valid time/state domain."""


class DivergenceError(HjbKsosError):
    """A trajectory or iteration produced NaN/Inf.

    Carries ``time``, the integration time at which the blowup was detected
    (None when not applicable).
    """

    def __init__(self, msg: str, time: float | None = None):
        super().__init__(msg)
        self.time = time


class ConvergenceError(HjbKsosError):
    """Iteration budget exhausted before reaching tolerance.

    Carries the last Newton ``decrement`` (or gradient norm) and, for
    homotopy runs, the ``stage`` index that failed.
    """

    def __init__(self, msg: str, decrement: float | None = None,
                 stage: int | None = None):
        super().__init__(msg)
        self.decrement = decrement
        self.stage = stage


class FactorizationError(HjbKsosError):
    """A required Cholesky factorization failed even after jitter escalation."""

    def __init__(self, msg: str, jitter: float | None = None):
        super().__init__(msg)
        self.jitter = jitter


class AssemblyError(HjbKsosError):
    """Constraint assembly found inconsistent dimensions or bad sample data."""


class NumericalError(HjbKsosError):
    """A line search or linear solve failed in a way retries cannot fix."""
