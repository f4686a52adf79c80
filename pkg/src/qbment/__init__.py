"""Entanglement dynamics of two oscillators in a common bosonic bath.

Gaussian covariance-matrix machinery, exact propagation of the oscillators
plus a discretized bath, and the analytic SD / SDR / NSD phase diagram.
"""

from .errors import (
    ConfigurationError,
    InvalidStateError,
    NumericalError,
    QBMError,
    RecurrenceError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "InvalidStateError",
    "NumericalError",
    "QBMError",
    "RecurrenceError",
    "__version__",
]
