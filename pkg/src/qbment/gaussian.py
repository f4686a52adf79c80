"""Covariance-matrix algebra for Gaussian states of harmonic oscillators.

Conventions: hbar = 1, quadratures ordered (x_1, p_1, x_2, p_2, ...) and
V_ij = <{r_i, r_j}>/2 - <r_i><r_j>.  The vacuum of a unit-mass, unit-frequency
oscillator has V = diag(1/2, 1/2).  First moments are never stored, nothing
computed here depends on them.

Covariance matrices are plain ``numpy`` arrays; the functions below validate
them on entry and never modify their inputs.  Arrays of dtype ``np.longdouble``
stay in extended precision throughout, which strongly squeezed states need:
in double precision a two-mode squeezed state with r = 5 cannot even be
stored to better than ~1e-8 in its narrow quadrature.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidStateError

#: Symplectic eigenvalues in [1/2 - PHYSICAL_TOL, 1/2] count as exactly 1/2.
PHYSICAL_TOL = 1e-9
SYMMETRY_TOL = 1e-12


def symplectic_form(n_modes):
    """Block-diagonal symplectic form with per-mode blocks [[0, 1], [-1, 0]]."""
    if n_modes < 1:
        raise ValueError("n_modes must be positive")
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def _dtype(V):
    return np.longdouble if np.asarray(V).dtype == np.longdouble else float


def _as_covariance(V):
    V = np.asarray(V, dtype=_dtype(V))
    if V.ndim != 2 or V.shape[0] != V.shape[1] or V.shape[0] % 2:
        raise InvalidStateError(f"covariance must be a square 2n x 2n matrix, got shape {V.shape}")
    scale = np.max(np.abs(V))
    if not np.all(np.isfinite(V)) or scale == 0.0:
        raise InvalidStateError("covariance has non-finite or all-zero entries")
    if np.max(np.abs(V - V.T)) > SYMMETRY_TOL * scale:
        raise InvalidStateError("covariance is not symmetric")
    return V


def _cholesky(V):
    if V.dtype == np.longdouble:
        return _cholesky_ext(V)
    try:
        return np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        raise InvalidStateError("covariance is not positive definite") from None


def _cholesky_ext(V):
    # numpy.linalg has no extended-precision kernels; sizes here are tiny
    n = V.shape[0]
    L = np.zeros_like(V)
    for j in range(n):
        d = V[j, j] - L[j, :j] @ L[j, :j]
        if not d > 0:
            raise InvalidStateError("covariance is not positive definite")
        L[j, j] = np.sqrt(d)
        L[j + 1 :, j] = (V[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def _jacobi_eigvalsh(A, tol=None, max_sweeps=60):
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi, in A's dtype."""
    A = A.copy()
    n = A.shape[0]
    tol = np.finfo(A.dtype).eps if tol is None else tol
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * np.sqrt(np.sum(A * A)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1)) if theta else 1
                c = 1 / np.sqrt(t * t + 1)
                sn = t * c
                R = np.eye(n, dtype=A.dtype)
                R[p, p] = R[q, q] = c
                R[p, q], R[q, p] = sn, -sn
                A = R.T @ A @ R
    return np.sort(np.diag(A))


def symplectic_eigenvalues(V, method="eig"):
    """Symplectic spectrum of ``V`` in ascending order.

    ``method="eig"`` diagonalizes i L^T Sigma L with V = L L^T, which is
    Hermitian and has the same spectrum as i Sigma V.  ``method="invariants"``
    uses the closed two-mode formula built from det A + det B + 2 det C and
    det V (only for two modes).
    """
    V = _as_covariance(V)
    n = V.shape[0] // 2
    if method == "invariants":
        return _symplectic_eigenvalues_2mode(V)
    if method != "eig":
        raise ValueError(f"unknown method {method!r}")
    L = _cholesky(V)
    M = L.T @ symplectic_form(n).astype(V.dtype) @ L
    if V.dtype == np.longdouble:
        return _symplectic_eigenvalues_ext(L, M)
    # iM is Hermitian with eigenvalues +-nu_k
    w = np.linalg.eigvalsh(1j * M)
    return np.sort(w[n:])


def _symplectic_eigenvalues_ext(L, M):
    # M^T M = -M^2 has every nu_k^2 twice
    ev = _jacobi_eigvalsh(M.T @ M)
    nu = np.sqrt(np.abs(ev[0::2] + ev[1::2]) / 2)
    if len(nu) == 2:
        # Pf(M) = det L, so nu_min = det L / nu_max without any cancellation
        nu[0] = abs(np.prod(np.diag(L))) / nu[1]
    return nu.astype(float)


def _symplectic_eigenvalues_2mode(V):
    if V.shape != (4, 4):
        raise InvalidStateError("the invariant route needs a two-mode covariance")
    V = V.astype(float)
    _cholesky(V)
    A, B, C = V[:2, :2], V[2:, 2:], V[:2, 2:]
    delta = np.linalg.det(A) + np.linalg.det(B) + 2.0 * np.linalg.det(C)
    det = np.linalg.det(V)
    disc = max(delta * delta - 4.0 * det, 0.0)
    nu_minus = np.sqrt(max((delta - np.sqrt(disc)) / 2.0, 0.0))
    nu_plus = np.sqrt((delta + np.sqrt(disc)) / 2.0)
    return np.array([nu_minus, nu_plus])


def check_physical(V, tol=PHYSICAL_TOL):
    """Raise InvalidStateError unless V is a valid quantum covariance."""
    nu = symplectic_eigenvalues(V)
    if nu[0] < 0.5 - tol:
        raise InvalidStateError(f"uncertainty relation violated: nu_min = {nu[0]:.3e} < 1/2")
    return nu


def is_physical(V, tol=PHYSICAL_TOL):
    try:
        check_physical(V, tol)
    except InvalidStateError:
        return False
    return True


def partial_transpose(V, mode=1):
    """Flip the sign of the momentum of ``mode`` (0-based): returns P V P."""
    V = np.asarray(V, dtype=_dtype(V))
    n = V.shape[0] // 2
    if not 0 <= mode < n:
        raise IndexError(f"mode {mode} out of range for {n} modes")
    out = V.copy()
    k = 2 * mode + 1
    out[k, :] *= -1.0
    out[:, k] *= -1.0
    return out


def log_negativity(V, tol=PHYSICAL_TOL):
    """Logarithmic negativity max{0, -ln(2 nu_min)} of a two-mode state.

    ``nu_min`` is the smallest symplectic eigenvalue of the partial transpose.
    Values of ``nu_min`` within ``tol`` below 1/2 are clamped to the separable
    boundary.
    """
    V = _as_covariance(V)
    if V.shape != (4, 4):
        raise InvalidStateError("log_negativity is defined here for two modes")
    check_physical(V, tol)
    nu_min = symplectic_eigenvalues(partial_transpose(V, 1))[0]
    if nu_min >= 0.5 - PHYSICAL_TOL:
        return 0.0
    return float(-np.log(2.0 * nu_min))


# -- basis changes -----------------------------------------------------------

def _to_pm(dtype=float):
    # rows: (x_-, p_-, x_+, p_+) in terms of (x_1, p_1, x_2, p_2)
    h = 1 / np.sqrt(dtype(2))
    return np.array(
        [
            [h, 0, -h, 0],
            [0, h, 0, -h],
            [h, 0, h, 0],
            [0, h, 0, h],
        ],
        dtype=dtype,
    )


def basis_change_pm(V, direction="to_pm"):
    """Rotate a two-mode covariance between (x_1, p_1, x_2, p_2) and (x_-, p_-, x_+, p_+).

    x_pm = (x_1 pm x_2)/sqrt(2) and likewise for momenta; the map is both
    orthogonal and symplectic.
    """
    dtype = _dtype(V)
    V = np.asarray(V, dtype=dtype)
    if V.shape != (4, 4):
        raise InvalidStateError("basis_change_pm needs a two-mode covariance")
    if direction not in ("to_pm", "from_pm"):
        raise ValueError(f"direction must be 'to_pm' or 'from_pm', not {direction!r}")
    T = _to_pm(dtype)
    if direction == "from_pm":
        T = T.T
    return T @ V @ T.T


def pm_dispersions(V):
    """(<x_-^2>, <p_-^2>, <x_+^2>, <p_+^2>) of a two-mode covariance in the (1, 2) basis."""
    return tuple(float(v) for v in np.diag(basis_change_pm(V, "to_pm")))


# -- states ------------------------------------------------------------------


class StateKind(str, Enum):
    TWO_MODE_SQUEEZED = "two_mode_squeezed"
    SEPARABLE_SQUEEZED = "separable_squeezed"
    COHERENT = "coherent"


@dataclass(frozen=True)
class InitialStateSpec:
    kind: StateKind
    r: float = 0.0
    m: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", StateKind(self.kind))
        if not self.r >= 0:
            raise ValueError(f"squeezing must be non-negative, got {self.r}")
        if not (self.m > 0 and self.omega > 0):
            raise ValueError("mass and reference frequency must be positive")


def vacuum(n_modes=2, m=1.0, omega=1.0, dtype=float):
    m, omega = dtype(m), dtype(omega)
    return np.diag(np.tile(np.array([1 / (2 * m * omega), m * omega / 2], dtype=dtype), n_modes))


def make_initial_state(spec, dtype=np.longdouble):
    """Covariance of the initial system state described by ``spec``.

    Two-mode squeezing localizes x_- and p_+ as r grows; the separable state
    squeezes p of each oscillator by the same factor (m Omega dx/dp = e^{2r}).
    The matrix is built in extended precision by default so that strongly
    squeezed states stay physical to 1e-9; pass ``dtype=float`` for doubles.
    """
    m, w, r = dtype(spec.m), dtype(spec.omega), dtype(spec.r)
    wide_x, narrow_x = np.exp(2 * r) / (2 * m * w), np.exp(-2 * r) / (2 * m * w)
    wide_p, narrow_p = m * w * np.exp(2 * r) / 2, m * w * np.exp(-2 * r) / 2
    if spec.kind is StateKind.TWO_MODE_SQUEEZED:
        return basis_change_pm(np.diag([narrow_x, wide_p, wide_x, narrow_p]), "from_pm")
    if spec.kind is StateKind.SEPARABLE_SQUEEZED:
        return np.diag([wide_x, narrow_p, wide_x, narrow_p])
    return vacuum(2, m, w, dtype)


def squeezing_of(V, m, omega_minus):
    """Squeezing r = |ln(m Omega_- dx_-/dp_-)| / 2 read off the x_- marginal."""
    xm2, pm2, _, _ = pm_dispersions(V)
    if xm2 <= 0 or pm2 <= 0:
        raise InvalidStateError("degenerate x_- marginal")
    return abs(0.5 * np.log(m * omega_minus * np.sqrt(xm2 / pm2)))


def marginal_purity(V, modes):
    """Purity 1/(2^k sqrt(det V_k)) of the marginal on ``modes``."""
    V = np.asarray(V, dtype=float)
    n = V.shape[0] // 2
    modes = sorted(set(modes))
    if not modes:
        raise ValueError("empty mode set")
    if modes[0] < 0 or modes[-1] >= n:
        raise IndexError(f"modes {modes} out of range for {n} modes")
    idx = [2 * k + j for k in modes for j in (0, 1)]
    sub = V[np.ix_(idx, idx)]
    det = np.linalg.det(sub)
    if det <= 0:
        raise InvalidStateError("marginal covariance is not positive definite")
    return float(1.0 / (2 ** len(modes) * np.sqrt(det)))


def local_rotation(theta, m=1.0, omega=1.0):
    """Free evolution of one oscillator over phase ``omega * t = theta`` (symplectic 2x2)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s / (m * omega)], [-m * omega * s, c]])
