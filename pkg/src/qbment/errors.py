"""Exception hierarchy shared by the library and the command-line driver."""


class QBMError(Exception):
    """Base class for all errors raised by qbment."""


class InvalidStateError(QBMError, ValueError):
    """A covariance matrix is not symmetric, not positive, or violates the uncertainty relation."""


class ConfigurationError(QBMError, ValueError):
    """Model or run parameters are inconsistent (bad values, unstable potential...)."""


class RecurrenceError(QBMError):
    """Requested horizon is too close to the recurrence time of the discretized bath."""


class NumericalError(QBMError):
    """A computed quantity came out unphysical beyond tolerance."""
