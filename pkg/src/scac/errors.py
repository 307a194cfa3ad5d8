"""Exception hierarchy shared by every module."""


class ScacError(Exception):
    """Base class for all package errors."""


class ParameterError(ScacError, ValueError):
    """Invalid shapes, ranges or specification values."""


class ErgodicityError(ScacError):
    """The chain is reducible or periodic, or a stationary solve is singular."""


class ConditioningError(ScacError):
    """A linear system is singular or too badly conditioned to trust."""

    def __init__(self, message, cond=None):
        super().__init__(message if cond is None else f"{message} (cond={cond:.3e})")
        self.cond = cond


class NumericalFailure(ScacError):
    """A non-finite value appeared while iterating."""

    def __init__(self, message, step=None, state=None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step
        self.state = state
