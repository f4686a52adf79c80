"""Time evolution of two oscillators coupled to a common discretized bath.

The full model is quadratic, so the covariance of oscillators plus bath is
propagated exactly: the mass-weighted potential matrix is diagonalized once
and the symplectic propagator is assembled from cos/sin of the normal-mode
frequencies.  Only the rows belonging to the two system oscillators are ever
formed, so each output time costs O(N^2) after one O(N^3) eigensolve.

A reduced two-mode integrator with constant (asymptotic) master-equation
coefficients is provided alongside, for the resonant case.
"""

import functools
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy.signal import find_peaks

from .bath import SpectralDensity, coth_factor, discretize, thermal_variances
from .errors import ConfigurationError, InvalidStateError, NumericalError, RecurrenceError
from .gaussian import basis_change_pm, log_negativity, marginal_purity, symplectic_eigenvalues

EVENT_THRESHOLD = 1e-9
#: Relative window range below which a series counts as flat (no period needed).
FLAT_TOL = 1e-6
TRAJECTORY_TOL = 1e-6
_CHUNK = 256


@dataclass(frozen=True)
class ModelParams:
    """Renormalized system parameters plus the environment.

    ``omega1``, ``omega2`` and ``c12`` (frequency^2 units) are the physical,
    cutoff-independent values; the bare ones entering the Hamiltonian are
    derived by :func:`bare_parameters`.
    """

    omega1: float = 1.0
    omega2: float = 1.0
    c12: float = 0.0
    m: float = 1.0
    spectral: SpectralDensity = field(default_factory=SpectralDensity)
    n_modes: int = 2000

    def __post_init__(self):
        if not (self.omega1 > 0 and self.omega2 > 0):
            raise ConfigurationError("oscillator frequencies must be positive")
        if not self.m > 0:
            raise ConfigurationError("mass must be positive")
        w1, w2 = self.omega1**2, self.omega2**2
        if w1 * w2 - self.c12**2 <= 0:
            raise ConfigurationError(
                f"renormalized potential is not positive definite (|C12| = {abs(self.c12):g})"
            )

    @property
    def resonant(self):
        return self.omega1 == self.omega2

    @property
    def omega_minus(self):
        """Frequency of the x_- normal coordinate (exact in the resonant case)."""
        return float(np.sqrt((self.omega1**2 + self.omega2**2) / 2.0 - self.c12))

    @property
    def omega_plus(self):
        return float(np.sqrt((self.omega1**2 + self.omega2**2) / 2.0 + self.c12))

    @property
    def state_frequency(self):
        """Reference frequency used to build initial squeezed states."""
        return float(np.sqrt(self.omega1**2 - self.c12))


class BareParameters(NamedTuple):
    omega1_sq: float
    omega2_sq: float
    c12: float


class Generator(NamedTuple):
    K: np.ndarray
    masses: np.ndarray


@functools.lru_cache(maxsize=8)
def bath_of(p):
    return discretize(p.spectral, p.n_modes)


def bare_parameters(p, bath=None):
    """Counterterm-shifted bare frequencies and coupling.

    Eliminating the bath coordinates from the static potential lowers the
    curvature along x_1 + x_2 by sum c_n^2/(m_n w_n^2); adding that shift
    (divided by m) to both omega_i^2 and to c12 leaves the x_- sector untouched
    and makes the long-time frequencies equal to the renormalized ones.
    For the ohmic bath the shift is 4 gamma0 cutoff / pi.
    """
    bath = bath_of(p) if bath is None else bath
    shift = bath.counterterm() / p.m
    return BareParameters(p.omega1**2 + shift, p.omega2**2 + shift, p.c12 + shift)


def build_generator(p, bath=None):
    """Potential matrix K over (x_1, x_2, q_1..q_N) and the matching mass vector."""
    bath = bath_of(p) if bath is None else bath
    bare = bare_parameters(p, bath)
    n = bath.n_modes + 2
    K = np.zeros((n, n))
    K[0, 0] = p.m * bare.omega1_sq
    K[1, 1] = p.m * bare.omega2_sq
    K[0, 1] = K[1, 0] = p.m * bare.c12
    K[0, 2:] = K[1, 2:] = bath.couplings
    K[2:, 0] = K[2:, 1] = bath.couplings
    K[2:, 2:] = np.diag(bath.masses * bath.frequencies**2)
    try:
        np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise ConfigurationError(
            "potential matrix is not positive definite; use more bath modes or a smaller gamma0*cutoff"
        ) from None
    masses = np.concatenate([[p.m, p.m], bath.masses])
    return Generator(K, masses)


class NormalModes:
    """Normal-mode decomposition of H = p^T M^-1 p / 2 + x^T K x / 2.

    ``vectors`` diagonalize the mass-weighted matrix M^-1/2 K M^-1/2 and
    ``freqs`` are the normal-mode frequencies.  Immutable after construction.
    """

    def __init__(self, K, masses):
        K = np.asarray(K, dtype=float)
        masses = np.asarray(masses, dtype=float)
        self.sqrt_m = np.sqrt(masses)
        Kt = K / np.outer(self.sqrt_m, self.sqrt_m)
        ev, self.vectors = np.linalg.eigh(Kt)
        if ev[0] <= 0:
            raise ConfigurationError(f"unstable normal mode: smallest eigenvalue {ev[0]:.3e}")
        self.freqs = np.sqrt(ev)
        self.n = len(ev)
        for a in ("sqrt_m", "vectors", "freqs"):
            getattr(self, a).flags.writeable = False

    def system_rows(self, times, n_sys=2):
        """Rows of S(t) for the first ``n_sys`` coordinates.

        Returns an array of shape (len(times), 2 n_sys, 2 n): rows ordered
        (x_1, p_1, x_2, p_2, ...), columns ordered (x_1..x_n, p_1..p_n).
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        O, nu, sm = self.vectors, self.freqs, self.sqrt_m
        Os = O[:n_sys]
        phase = np.outer(times, nu)
        c, s = np.cos(phase), np.sin(phase)
        nt = len(times)

        def rows(diag):
            return ((Os[None, :, :] * diag[:, None, :]).reshape(nt * n_sys, self.n) @ O.T).reshape(
                nt, n_sys, self.n
            )

        C, Sv, Sn = rows(c), rows(s / nu), rows(-s * nu)
        ms = sm[:n_sys][None, :, None]
        R = np.empty((nt, 2 * n_sys, 2 * self.n))
        R[:, 0::2, : self.n] = C * sm / ms
        R[:, 0::2, self.n :] = Sv / sm / ms
        R[:, 1::2, : self.n] = Sn * sm * ms
        R[:, 1::2, self.n :] = C / sm * ms
        return R

    def propagator(self, t):
        """Full symplectic propagator S(t) in (x_1, p_1, ..., x_n, p_n) order."""
        O, nu, sm = self.vectors, self.freqs, self.sqrt_m
        c, s = np.cos(nu * t), np.sin(nu * t)
        C = (O * c) @ O.T
        Sv = (O * (s / nu)) @ O.T
        Sn = (O * (-s * nu)) @ O.T
        S = np.empty((2 * self.n, 2 * self.n))
        S[0::2, 0::2] = C * np.outer(1 / sm, sm)
        S[0::2, 1::2] = Sv * np.outer(1 / sm, 1 / sm)
        S[1::2, 0::2] = Sn * np.outer(sm, sm)
        S[1::2, 1::2] = C * np.outer(sm, 1 / sm)
        return S

    def gibbs_covariance(self, T, n_sys=2):
        """Reduced covariance of the first ``n_sys`` modes in the global Gibbs state."""
        O, nu = self.vectors[:n_sys], self.freqs
        k = coth_factor(nu, T)
        sm = self.sqrt_m[:n_sys]
        xx = (O * (k / (2 * nu))) @ O.T / np.outer(sm, sm)
        pp = (O * (nu * k / 2)) @ O.T * np.outer(sm, sm)
        V = np.zeros((2 * n_sys, 2 * n_sys))
        V[0::2, 0::2] = xx
        V[1::2, 1::2] = pp
        return V


@functools.lru_cache(maxsize=4)
def normal_modes(p):
    """Cached normal-mode decomposition of the model ``p``."""
    return NormalModes(*build_generator(p))


@dataclass(frozen=True, eq=False)
class TrajectoryPoint:
    t: float
    V: np.ndarray
    E_N: float
    var_xm: float
    var_pm: float
    var_xp: float
    var_pp: float
    purity_minus: float

    @classmethod
    def from_covariance(cls, t, V):
        try:
            nu_min = symplectic_eigenvalues(V)[0]
        except InvalidStateError as exc:
            raise NumericalError(f"t = {t:g}: {exc}") from None
        if nu_min < 0.5 - TRAJECTORY_TOL:
            raise NumericalError(f"t = {t:g}: unphysical covariance, nu_min = {nu_min:.3e}")
        Vpm = basis_change_pm(V, "to_pm")
        xm, pm, xp, pp = np.diag(Vpm)
        return cls(
            t=float(t),
            V=V,
            E_N=log_negativity(V, tol=TRAJECTORY_TOL),
            var_xm=float(xm),
            var_pm=float(pm),
            var_xp=float(xp),
            var_pp=float(pp),
            purity_minus=marginal_purity(Vpm, [0]),
        )


def _to_xxpp(n):
    return np.concatenate([np.arange(0, 2 * n, 2), np.arange(1, 2 * n, 2)])


def propagate(V0_full, K, masses, times, recurrence_time=None, modes=None):
    """Exact evolution of a product initial state; returns one TrajectoryPoint per time.

    ``V0_full`` is the (N+2)-mode covariance in (x_1, p_1, x_2, p_2, q_1, pi_1, ...)
    order and must have no system-bath correlations.  Pass a prebuilt
    :class:`NormalModes` as ``modes`` to skip the eigensolve.
    """
    V0_full = np.asarray(V0_full, dtype=float)
    times = np.asarray(times, dtype=float)
    if recurrence_time is not None and times.size and times.max() > 0.5 * recurrence_time:
        raise RecurrenceError(
            f"output time {times.max():g} exceeds half the recurrence time {recurrence_time:g}"
        )
    if np.any(V0_full[:4, 4:] != 0.0):
        raise InvalidStateError("initial covariance must be a system-bath product")
    modes = NormalModes(K, masses) if modes is None else modes
    if V0_full.shape != (2 * modes.n, 2 * modes.n):
        raise InvalidStateError("initial covariance does not match the generator size")
    Vb = V0_full[4:, 4:]
    if np.count_nonzero(Vb - np.diag(np.diag(Vb))) == 0:
        d = np.diag(Vb)
        covs = evolve_system(modes, V0_full[:4, :4], d[0::2], d[1::2], times)
    else:
        covs = evolve_system(modes, V0_full[:4, :4], None, None, times, bath_block=Vb)
    return [TrajectoryPoint.from_covariance(t, V) for t, V in zip(times, covs)]


def evolve_system(modes, V_sys, bath_q2, bath_p2, times, bath_block=None):
    """Reduced 4x4 covariances at ``times`` for an uncorrelated system + bath start.

    The bath enters either through its per-mode variances (thermal states) or
    a general dense ``bath_block`` in xpxp order.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    V_sys = np.asarray(V_sys, dtype=float)
    n = modes.n
    sys_cols = np.array([0, n, 1, n + 1])
    bath_cols = np.concatenate([np.arange(2, n), np.arange(n + 2, 2 * n)])
    if bath_block is None:
        bath_var = np.concatenate([bath_q2, bath_p2])
    else:
        perm = _to_xxpp(n - 2)
        Vb = np.asarray(bath_block)[np.ix_(perm, perm)]
    out = np.empty((len(times), 4, 4))
    for start in range(0, len(times), _CHUNK):
        sl = slice(start, start + _CHUNK)
        R = modes.system_rows(times[sl])
        Rs = R[:, :, sys_cols]
        Rb = R[:, :, bath_cols]
        cov = Rs @ V_sys @ Rs.transpose(0, 2, 1)
        if bath_block is None:
            cov += np.einsum("tia,tja,a->tij", Rb, Rb, bath_var)
        else:
            cov += Rb @ Vb @ Rb.transpose(0, 2, 1)
        out[sl] = 0.5 * (cov + cov.transpose(0, 2, 1))
    return out


def evolve(p, V_sys, T, times, modes=None):
    """Trajectory of the model ``p`` from system state ``V_sys`` and a thermal bath at ``T``."""
    bath = bath_of(p)
    times = np.asarray(times, dtype=float)
    bath.check_horizon(float(times.max()))
    modes = normal_modes(p) if modes is None else modes
    q2, p2 = thermal_variances(bath, T)
    covs = evolve_system(modes, np.asarray(V_sys, dtype=float), q2, p2, times)
    return [TrajectoryPoint.from_covariance(t, V) for t, V in zip(times, covs)]


# -- reduced constant-coefficient master equation ----------------------------


@dataclass(frozen=True)
class ReducedCoefficients:
    """Asymptotic master-equation constants for the x_+ oscillator."""

    omega: float
    gamma: float
    D: float
    f: float
    m: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if not self.D > 0:
            raise ConfigurationError(f"D must be positive, got {self.D}")
        if not self.D / (2 * self.m**2 * self.gamma) - self.f / self.m > 0:
            raise ConfigurationError("coefficients give a negative stationary <x_+^2>")

    def stationary(self):
        """(<x_+^2>, <p_+^2>) at the fixed point."""
        p2 = self.D / (2 * self.gamma)
        x2 = (self.D / (2 * self.m**2 * self.gamma) - self.f / self.m) / self.omega**2
        return x2, p2


def _reduced_drift(coeffs, omega_minus):
    m = coeffs.m
    A = np.zeros((4, 4))
    A[0, 1] = A[2, 3] = 1.0 / m
    A[1, 0] = -m * omega_minus**2
    A[3, 2] = -m * coeffs.omega**2
    A[3, 3] = -2.0 * coeffs.gamma
    Dm = np.zeros((4, 4))
    Dm[2, 3] = Dm[3, 2] = -coeffs.f
    Dm[3, 3] = 2.0 * coeffs.D
    return A, Dm


def reduced_master_rhs(V, coeffs, omega_minus):
    """dV/dt of the (x_-, p_-, x_+, p_+) covariance under the asymptotic master equation."""
    A, Dm = _reduced_drift(coeffs, omega_minus)
    return A @ V + V @ A.T + Dm


def reduced_master_step(V, coeffs, omega_minus, dt):
    """One classical Runge-Kutta step of the reduced covariance flow."""
    V = np.asarray(V, dtype=float)
    A, Dm = _reduced_drift(coeffs, omega_minus)

    def rhs(X):
        return A @ X + X @ A.T + Dm

    k1 = rhs(V)
    k2 = rhs(V + 0.5 * dt * k1)
    k3 = rhs(V + 0.5 * dt * k2)
    k4 = rhs(V + dt * k3)
    return V + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_reduced(V, coeffs, omega_minus, dt, n_steps):
    """Stack of covariances after 0..n_steps reduced steps."""
    out = np.empty((n_steps + 1, 4, 4))
    out[0] = V
    for i in range(n_steps):
        out[i + 1] = reduced_master_step(out[i], coeffs, omega_minus, dt)
    return out


# -- series analysis ---------------------------------------------------------


class ObservedPhase(str, Enum):
    SD = "SD"
    SDR = "SDR"
    NSD = "NSD"
    UNDECIDED = "undecided"


@dataclass
class SeriesAnalysis:
    death_times: list
    revival_times: list
    E_mean: Optional[float]
    E_amp: Optional[float]
    period: Optional[float]
    phase_observed: ObservedPhase

    def to_dict(self):
        return {
            "death_times": list(self.death_times),
            "revival_times": list(self.revival_times),
            "E_mean": self.E_mean,
            "E_amp": self.E_amp,
            "period": self.period,
            "phase_observed": self.phase_observed.value,
        }


def _crossing_events(t, E, thr):
    """Downward/upward threshold crossings with one sample of hysteresis."""
    alive = E > thr
    deaths, revivals = [], []
    state = alive[0]
    for i in range(1, len(E)):
        if alive[i] == state:
            continue
        # the new state must persist for the next sample too
        if i + 1 < len(E) and alive[i + 1] != alive[i]:
            continue
        e0, e1 = E[i - 1] - thr, E[i] - thr
        tc = t[i - 1] + (t[i] - t[i - 1]) * e0 / (e0 - e1)
        (revivals if alive[i] else deaths).append(float(tc))
        state = alive[i]
    return deaths, revivals


def _period(t, E):
    span = E.max() - E.min()
    if span < 1e-12:
        return None
    peaks, _ = find_peaks(E, prominence=0.25 * span)
    if len(peaks) < 2:
        return None
    tp = t[peaks].astype(float)
    # parabolic refinement of interior peaks
    for j, k in enumerate(peaks):
        if 0 < k < len(E) - 1:
            y0, y1, y2 = E[k - 1], E[k], E[k + 1]
            den = y0 - 2 * y1 + y2
            if den != 0:
                tp[j] += 0.5 * (y0 - y2) / den * (t[k + 1] - t[k])
    return float(np.mean(np.diff(tp)))


def analyze_negativity(times, E, window=0.25, threshold=EVENT_THRESHOLD):
    """Classify the long-time behaviour of a sampled E_N(t) series.

    The last ``window`` fraction of the time span is used for the phase
    label and the mean/amplitude estimates.
    """
    t = np.asarray(times, dtype=float)
    E = np.asarray(E, dtype=float)
    if not 0 < window <= 1:
        raise ValueError("window must be in (0, 1]")
    if len(t) < 3:
        raise ValueError("need at least three samples")
    deaths, revivals = _crossing_events(t, E, threshold)
    t_start = t[-1] - window * (t[-1] - t[0])
    sel = t >= t_start
    tw, Ew = t[sel], E[sel]
    period = _period(tw, Ew)
    d_win = [x for x in deaths if x >= t_start]
    r_win = [x for x in revivals if x >= t_start]

    E_mean = E_amp = None
    flat = Ew.max() - Ew.min() <= FLAT_TOL * max(1.0, abs(Ew.max()))
    if Ew.min() > threshold and period is None and not flat:
        # still oscillating, but the window is shorter than one period
        phase = ObservedPhase.UNDECIDED
    elif Ew.min() > threshold:
        phase = ObservedPhase.NSD
        E_mean = float((Ew.max() + Ew.min()) / 2)
        E_amp = float((Ew.max() - Ew.min()) / 2)
    elif Ew.max() <= threshold and (deaths or E.max() <= threshold):
        # a series that never got entangled is also a sudden-death outcome
        phase = ObservedPhase.SD
    elif d_win and r_win and period is not None:
        phase = ObservedPhase.SDR
    else:
        phase = ObservedPhase.UNDECIDED
    return SeriesAnalysis(deaths, revivals, E_mean, E_amp, period, phase)


def analyze_series(series, window=0.25, threshold=EVENT_THRESHOLD):
    """:func:`analyze_negativity` applied to a list of TrajectoryPoint."""
    t = [pt.t for pt in series]
    E = [pt.E_N for pt in series]
    return analyze_negativity(t, E, window, threshold)


def peak_fwhm(x, y):
    """Full width at half maximum of the highest peak of y(x), by linear interpolation.

    Returns None when the curve does not drop below half maximum on both sides.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(y))
    half = y[k] / 2.0
    if half <= 0:
        return None
    left = right = None
    for i in range(k, 0, -1):
        if y[i - 1] < half:
            left = x[i - 1] + (half - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
            break
    for i in range(k, len(y) - 1):
        if y[i + 1] < half:
            right = x[i] + (y[i] - half) * (x[i + 1] - x[i]) / (y[i] - y[i + 1])
            break
    if left is None or right is None:
        return None
    return float(right - left)
