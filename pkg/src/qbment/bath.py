"""Spectral densities, their discretization, and thermal bath states.

The spectral density follows J(w) = sum_n c_n^2 delta(w - w_n) / (2 m_n w_n),
so a bath with unit masses on a uniform midpoint grid reproduces J when
c_n^2 = 2 w_n J(w_n) dw.

Both spectral densities have a sharp cutoff: J vanishes above the cutoff.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigurationError, RecurrenceError

#: Fraction of the recurrence time a simulation may cover.
RECURRENCE_GUARD = 0.5


class SpectralKind(str, Enum):
    OHMIC = "ohmic"
    SUPEROHMIC = "superohmic"


@dataclass(frozen=True)
class SpectralDensity:
    """J(w) = 2 m gamma0 w^s / (pi cutoff^(s-1)) for w <= cutoff, 0 above.

    ``s`` is only used by the super-ohmic kind; ohmic is s = 1.
    """

    kind: SpectralKind = SpectralKind.OHMIC
    gamma0: float = 0.15
    cutoff: float = 20.0
    m: float = 1.0
    s: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SpectralKind(self.kind))
        # gamma0 = 0 is allowed: it is the closed-system limit
        if not self.gamma0 >= 0:
            raise ConfigurationError(f"gamma0 must be >= 0, got {self.gamma0}")
        if not self.cutoff > 0:
            raise ConfigurationError(f"cutoff must be positive, got {self.cutoff}")
        if not self.m > 0:
            raise ConfigurationError(f"mass must be positive, got {self.m}")
        if self.kind is SpectralKind.SUPEROHMIC and not self.s > 1:
            raise ConfigurationError(f"super-ohmic exponent must exceed 1, got {self.s}")

    @property
    def exponent(self):
        return 1.0 if self.kind is SpectralKind.OHMIC else float(self.s)

    def __call__(self, w):
        return spectral_value(self, w)


def spectral_value(J, w):
    """Evaluate J at frequency ``w`` (scalar or array, must be >= 0)."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for w >= 0")
    s = J.exponent
    val = 2.0 * J.m * J.gamma0 * w**s / (np.pi * J.cutoff ** (s - 1.0))
    val = np.where(w <= J.cutoff, val, 0.0)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True, eq=False)
class DiscretizedBath:
    frequencies: np.ndarray
    couplings: np.ndarray
    masses: np.ndarray
    spacing: float
    spectral: SpectralDensity

    @property
    def n_modes(self):
        return len(self.frequencies)

    @property
    def recurrence_time(self):
        return 2.0 * np.pi / self.spacing

    def check_horizon(self, t_max):
        limit = RECURRENCE_GUARD * self.recurrence_time
        if t_max > limit:
            raise RecurrenceError(
                f"t_max = {t_max:g} exceeds {RECURRENCE_GUARD:g} x recurrence time "
                f"({limit:g}); increase the number of bath modes"
            )

    def counterterm(self):
        """sum_n c_n^2 / (m_n w_n^2): the static potential shift felt by x_1 + x_2."""
        return float(np.sum(self.couplings**2 / (self.masses * self.frequencies**2)))


def discretize(J, n_modes):
    """Uniform midpoint discretization of ``J`` on (0, cutoff] with unit bath masses."""
    if n_modes < 2:
        raise ConfigurationError(f"need at least 2 bath modes, got {n_modes}")
    dw = J.cutoff / n_modes
    w = (np.arange(n_modes) + 0.5) * dw
    masses = np.ones(n_modes)
    c = np.sqrt(2.0 * masses * w * spectral_value(J, w) * dw)
    return DiscretizedBath(frequencies=w, couplings=c, masses=masses, spacing=dw, spectral=J)


def coth_factor(w, T):
    """coth(w / 2T), equal to 1 at T = 0."""
    w = np.asarray(w, dtype=float)
    if T < 0:
        raise ValueError(f"temperature must be >= 0, got {T}")
    if T == 0:
        return np.ones_like(w)
    with np.errstate(over="ignore"):
        # w/2T overflows to inf for denormal T, where tanh = 1 is the right limit
        return 1.0 / np.tanh(w / (2.0 * T))


def thermal_variances(bath, T):
    """Per-mode (<q_n^2>, <pi_n^2>) of the thermal bath state."""
    w, m = bath.frequencies, bath.masses
    k = coth_factor(w, T)
    return k / (2.0 * m * w), m * w * k / 2.0


def thermal_covariance(bath, T):
    """Dense 2N x 2N covariance of the thermal bath (block diagonal, xpxp order)."""
    q2, p2 = thermal_variances(bath, T)
    d = np.empty(2 * bath.n_modes)
    d[0::2], d[1::2] = q2, p2
    return np.diag(d)
