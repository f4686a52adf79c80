import numpy as np
import pytest
from scipy.linalg import expm

from qbment.dynamics import ModelParams, normal_modes
from qbment.gaussian import symplectic_form

ACCEPTANCE_LINES = []


def random_physical_covariance(rng, n_modes=2, scale=0.6):
    """S diag(nu) S^T with a random symplectic S = exp(Sigma H)."""
    H = rng.normal(size=(2 * n_modes, 2 * n_modes)) * scale
    H = H + H.T
    S = expm(symplectic_form(n_modes) @ H)
    nu = 0.5 + rng.exponential(1.0, size=n_modes)
    return S @ np.diag(np.repeat(nu, 2)) @ S.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def fig1():
    """Ohmic parameter set of the phase diagram: Omega=1, gamma0=0.15, cutoff=20, m=1, C12=0."""
    return ModelParams()


@pytest.fixture(scope="session")
def fig1_modes(fig1):
    return normal_modes(fig1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
