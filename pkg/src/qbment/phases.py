"""Asymptotic dispersions of x_+, phase-boundary quantities and the phase diagram.

For resonant oscillators x_- never feels the bath while x_+ relaxes to a
stationary state with dispersions (dx, dp).  From those,

    S_r    = ln(2 dx dp) / 2
    r_crit = |ln(m Omega_- dx / dp)| / 2
    E_c    = ln(1 / (2 m Omega_- dx^2)) / 2

and an initial state with squeezing r ends up in one of three phases:
NSD (entanglement survives), SDR (endless deaths and revivals) or SD
(entanglement dies for good).  The SDR band is [|r_crit - S_r|, r_crit + S_r].
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate, optimize

from .bath import SpectralKind, coth_factor
from .dynamics import NormalModes, ReducedCoefficients, build_generator, normal_modes
from .errors import ConfigurationError

BRANCH_TOL = 1e-9


class Phase(str, Enum):
    SD = "SD"
    SDR = "SDR"
    NSD = "NSD"


def equilibrium_covariance(p, bath=None, T=0.0, modes=None):
    """Reduced 4x4 covariance of the oscillators in the global Gibbs state at ``T``."""
    if T < 0:
        raise ValueError(f"temperature must be >= 0, got {T}")
    if modes is None:
        modes = normal_modes(p) if bath is None else NormalModes(*build_generator(p, bath))
    return modes.gibbs_covariance(T)


def plus_dispersions(V):
    """(dx_+, dp_+) standard deviations from a (1, 2)-basis covariance."""
    s = 0.5
    x2 = s * (V[0, 0] + V[2, 2] + 2 * V[0, 2])
    p2 = s * (V[1, 1] + V[3, 3] + 2 * V[1, 3])
    return float(np.sqrt(x2)), float(np.sqrt(p2))


def equilibrium_dispersions_fd(J, omega, T):
    """(dx_+, dp_+) from the fluctuation-dissipation relation of a damped oscillator.

    Uses the Lorentzian susceptibility of x_+ with damping 2 gamma0 (x_+
    couples to the bath with strength sqrt(2)), truncated at the cutoff.
    Independent of any discretization.
    """
    if J.kind is not SpectralKind.OHMIC:
        raise ConfigurationError("the quadrature route only supports the ohmic bath")
    m, g0 = J.m, J.gamma0

    def im_chi(w):
        return (4 * g0 * w / m) / ((omega**2 - w**2) ** 2 + 16 * g0**2 * w**2)

    def kx(w):
        if w == 0:
            # coth(w/2T) Im chi stays finite as w -> 0
            return 0.0 if T == 0 else 2 * T * 4 * g0 / (m * omega**4)
        return coth_factor(w, T) * im_chi(w)

    def kp(w):
        return w * w * coth_factor(w, T) * im_chi(w)

    # breakpoints at multiples of the half-width 2 gamma0 keep quad on a narrow peak
    width = 2 * g0
    pts = [omega + k * width for k in (-100, -10, -1, 0, 1, 10, 100)]
    pts = sorted({x for x in pts if 0 < x < J.cutoff})
    opts = dict(limit=1000, epsabs=1e-10, epsrel=1e-10, points=pts or None)
    x2 = integrate.quad(kx, 0.0, J.cutoff, **opts)[0] / np.pi
    p2 = m * m * integrate.quad(kp, 0.0, J.cutoff, **opts)[0] / np.pi
    return float(np.sqrt(x2)), float(np.sqrt(p2))


def asymptotic_coefficients(dx, dp, gamma, m, omega):
    """Diffusion constants (D, f) whose stationary state has dispersions (dx, dp)."""
    D = 2 * gamma * dp**2
    f = dp**2 / m - m * omega**2 * dx**2
    return ReducedCoefficients(omega=omega, gamma=gamma, D=D, f=f, m=m)


@dataclass(frozen=True)
class BoundaryQuantities:
    T: float
    dx: float
    dp: float
    S_r: float
    r_crit: float
    E_c: float
    omega_minus: float
    m: float = 1.0

    @property
    def b_lo(self):
        return self.r_crit - self.S_r

    @property
    def b_hi(self):
        return self.r_crit + self.S_r

    @property
    def momentum_dominated(self):
        """True when dp >= m Omega_- dx, the regime the phase conditions assume."""
        return self.dp >= self.m * self.omega_minus * self.dx * (1 - BRANCH_TOL)

    @property
    def sdr_band(self):
        return abs(self.b_lo), self.b_hi


def boundary_quantities(dx, dp, T, omega_minus, m=1.0):
    return BoundaryQuantities(
        T=float(T),
        dx=float(dx),
        dp=float(dp),
        S_r=float(0.5 * np.log(2 * dx * dp)),
        r_crit=float(abs(0.5 * np.log(m * omega_minus * dx / dp))),
        E_c=float(0.5 * np.log(1.0 / (2 * m * omega_minus * dx**2))),
        omega_minus=float(omega_minus),
        m=float(m),
    )


def boundaries(p, T, modes=None):
    """Boundary quantities of a resonant model at temperature ``T``."""
    if not p.resonant:
        raise ConfigurationError("phase boundaries are only defined for resonant oscillators")
    dx, dp = plus_dispersions(equilibrium_covariance(p, T=T, modes=modes))
    return boundary_quantities(dx, dp, T, p.omega_minus, p.m)


def _inequality_form(r, b):
    # the three phase conditions as inequalities on r, E_c and the SDR upper edge
    upper = 0.5 * np.log(2 * b.dp**2 / (b.m * b.omega_minus))
    if abs(r - b.r_crit) > b.S_r:
        return Phase.NSD
    if r < -b.E_c:
        return Phase.SD
    if abs(b.E_c) <= r <= upper:
        return Phase.SDR
    return None


def classify(r, b):
    """Phase of an initial state with squeezing ``r``; exact boundaries count as SDR."""
    if r < 0:
        raise ValueError(f"squeezing must be non-negative, got {r}")
    if not b.momentum_dominated:
        raise ConfigurationError(
            "dp_+ < m Omega_- dx_+: the SDR upper edge no longer equals r_crit + S_r"
        )
    lo, hi = b.b_lo, b.b_hi
    if r > hi or (lo > 0 and r < lo):
        phase = Phase.NSD
    elif lo < 0 and r < -lo:
        phase = Phase.SD
    else:
        phase = Phase.SDR
    # the interval form and the inequality form must agree away from float ties
    other = _inequality_form(r, b)
    near_edge = min(abs(r - abs(lo)), abs(r - hi)) < 1e-12 * max(1.0, hi)
    if other is not phase and not near_edge:
        raise AssertionError(f"classifier mismatch at r={r}: {phase} vs {other}")
    return phase


def asymptotic_negativity(r, b):
    """(mean, amplitude) of the late-time oscillation of E_N."""
    if r < 0:
        raise ValueError(f"squeezing must be non-negative, got {r}")
    return max(r, b.r_crit) - b.S_r, min(r, b.r_crit)


@dataclass(frozen=True)
class PhasePoint:
    r: float
    T: float
    phase: Phase
    E_mean: float
    E_amp: float


@dataclass
class PhaseDiagram:
    points: list
    boundaries: list


def phase_diagram(p, T_grid, r_grid, workers=1):
    """Classify every (r, T) of the grids; returns points in T-major order."""
    T_grid = [float(T) for T in T_grid]
    r_grid = [float(r) for r in r_grid]
    if not T_grid or not r_grid:
        raise ValueError("grids must be non-empty")
    if np.any(np.diff(T_grid) <= 0) or np.any(np.diff(r_grid) <= 0):
        raise ValueError("grids must be strictly ascending")
    modes = normal_modes(p)

    def row(T):
        b = boundaries(p, T, modes)
        return b, [PhasePoint(r, T, classify(r, b), *asymptotic_negativity(r, b)) for r in r_grid]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, T_grid))
    else:
        rows = [row(T) for T in T_grid]
    return PhaseDiagram(points=[pt for _, pts in rows for pt in pts], boundaries=[b for b, _ in rows])


def crossover_temperature(p, T_lo=0.0, T_hi=10.0, modes=None):
    """Temperature where S_r = r_crit, located by bracketing root search.

    Returns None when S_r - r_crit does not change sign on [T_lo, T_hi].
    """
    modes = normal_modes(p) if modes is None else modes

    def gap(T):
        b = boundaries(p, T, modes)
        return b.S_r - b.r_crit

    g_lo, g_hi = gap(T_lo), gap(T_hi)
    if g_lo * g_hi > 0:
        return None
    return float(optimize.brentq(gap, T_lo, T_hi, xtol=1e-10))


def damping_rate(p):
    """Asymptotic damping gamma = 2 gamma0 of the x_+ oscillator."""
    return 2.0 * p.spectral.gamma0

