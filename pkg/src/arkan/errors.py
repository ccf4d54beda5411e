"""Exception hierarchy shared across the package."""


class ArkanError(Exception):
    """Base class for all errors raised by arkan."""


class InputError(ArkanError, ValueError):
    """Malformed or out-of-contract input (bad file, bad shape, bad flag)."""


class DegenerateSeriesError(InputError):
    """Series has zero variance and cannot be standardized."""


class EstimationError(ArkanError):
    """A statistical estimate could not be computed reliably.

    Attributes
    ----------
    condition : float or None
        Condition number of the offending system, when one is available.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NumericalError(ArkanError, FloatingPointError):
    """Non-finite values appeared during a forward pass or training."""
