import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, linalg

from qbment.bath import SpectralDensity, thermal_covariance
from qbment.dynamics import (
    EVENT_THRESHOLD,
    ModelParams,
    NormalModes,
    ObservedPhase,
    ReducedCoefficients,
    TrajectoryPoint,
    analyze_negativity,
    analyze_series,
    bare_parameters,
    bath_of,
    build_generator,
    evolve,
    evolve_system,
    integrate_reduced,
    normal_modes,
    peak_fwhm,
    propagate,
    reduced_master_rhs,
    reduced_master_step,
)
from qbment.errors import ConfigurationError, InvalidStateError, NumericalError, RecurrenceError
from qbment.gaussian import (
    InitialStateSpec,
    basis_change_pm,
    local_rotation,
    log_negativity,
    make_initial_state,
    symplectic_form,
)
from qbment.phases import asymptotic_coefficients, equilibrium_covariance

SMALL = ModelParams(n_modes=400)
CLOSED = ModelParams(spectral=SpectralDensity(gamma0=0.0), n_modes=400)


def tms(r):
    return make_initial_state(InitialStateSpec("two_mode_squeezed", r))


def full_state(V_sys, bath, T):
    n = bath.n_modes
    V = np.zeros((2 * n + 4, 2 * n + 4))
    V[:4, :4] = V_sys
    V[4:, 4:] = thermal_covariance(bath, T)
    return V


# -- parameters and generator ------------------------------------------------


def test_bare_parameters_examples(fig1):
    bare = bare_parameters(fig1)
    assert bare.omega1_sq == pytest.approx(4.8197, abs=5e-3)
    assert bare.omega2_sq == bare.omega1_sq
    assert bare.c12 == pytest.approx(3.8197, abs=5e-3)
    assert bare.c12 == pytest.approx(4 * 0.15 * 20 / np.pi, rel=1e-3)
    # x_- is untouched by the counterterm
    assert bare.omega1_sq - bare.c12 == pytest.approx(1.0, abs=1e-14)
    none = bare_parameters(CLOSED)
    assert none == (1.0, 1.0, 0.0)


@pytest.mark.parametrize("p", [SMALL, ModelParams(omega1=1.0, omega2=1.3, c12=0.2, n_modes=300)])
def test_counterterm_completes_the_square(p):
    # minimizing the static potential over the bath leaves the renormalized potential
    K, _ = build_generator(p)
    schur = K[:2, :2] - K[:2, 2:] @ np.linalg.solve(K[2:, 2:], K[2:, :2])
    target = p.m * np.array([[p.omega1**2, p.c12], [p.c12, p.omega2**2]])
    assert np.allclose(schur, target, rtol=0, atol=1e-12)


def test_model_params_validation():
    with pytest.raises(ConfigurationError):
        ModelParams(omega1=0.0)
    with pytest.raises(ConfigurationError):
        ModelParams(c12=1.0)
    with pytest.raises(ConfigurationError):
        ModelParams(m=-1.0)
    p = ModelParams(omega1=1.2, omega2=1.0, c12=0.3)
    assert not p.resonant
    assert p.omega_minus == pytest.approx(np.sqrt(1.22 - 0.3))
    assert ModelParams(c12=0.19).omega_minus == pytest.approx(0.9)


def test_generator_structure():
    K, masses = build_generator(SMALL)
    bath = bath_of(SMALL)
    assert np.array_equal(K, K.T)
    assert np.array_equal(K[0, 2:], bath.couplings) and np.array_equal(K[1, 2:], bath.couplings)
    assert np.allclose(np.diag(K)[2:], bath.frequencies**2)
    assert K[0, 1] == pytest.approx(bare_parameters(SMALL).c12)
    assert masses.shape == (402,)
    K0, _ = build_generator(CLOSED)
    assert np.count_nonzero(K0[:2, 2:]) == 0
    assert np.array_equal(K0[:2, :2], np.eye(2))


def test_minus_coordinate_decouples_from_bath():
    K, _ = build_generator(SMALL)
    R = np.eye(K.shape[0])
    R[:2, :2] = np.array([[1, -1], [1, 1]]) / np.sqrt(2)
    Kpm = R @ K @ R.T
    assert np.max(np.abs(Kpm[0, 2:])) < 1e-15
    assert Kpm[0, 1] == pytest.approx(0.0, abs=1e-14)
    assert Kpm[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_generator_smallest_eigenvalue(fig1):
    K, _ = build_generator(fig1)
    lo = np.linalg.eigvalsh(K)[0]
    # bounded by the renormalized Omega^2 from above
    assert 0 < lo <= 1.0


# -- normal modes and exact propagation --------------------------------------


@pytest.fixture(scope="module")
def small_modes():
    return normal_modes(SMALL)


def test_propagator_is_symplectic(small_modes):
    Sig = symplectic_form(small_modes.n)
    for t in (0.05, 1.0, 17.3):
        S = small_modes.propagator(t)
        assert np.max(np.abs(S.T @ Sig @ S - Sig)) <= 1e-10
    assert np.allclose(small_modes.propagator(0.0), np.eye(2 * small_modes.n), atol=1e-13)


def test_propagator_matches_matrix_exponential():
    p = ModelParams(omega1=1.1, omega2=0.9, c12=0.1, n_modes=20)
    K, masses = build_generator(p)
    n = K.shape[0]
    # Hamiltonian flow d/dt (x, p) = (M^-1 p, -K x), assembled in xpxp order
    H = np.zeros((2 * n, 2 * n))
    H[0::2, 1::2] = np.diag(1 / masses)
    H[1::2, 0::2] = -K
    modes = NormalModes(K, masses)
    for t in (0.3, 2.0):
        assert np.allclose(modes.propagator(t), linalg.expm(H * t), atol=1e-10)


def test_system_rows_match_propagator(small_modes):
    n = small_modes.n
    t = np.array([0.0, 0.7, 3.1])
    R = small_modes.system_rows(t)
    perm = np.concatenate([np.arange(0, 2 * n, 2), np.arange(1, 2 * n, 2)])
    for k, tk in enumerate(t):
        S = small_modes.propagator(tk)
        assert np.allclose(R[k], S[:4][:, perm], atol=1e-12)


def test_normal_modes_read_only(small_modes):
    with pytest.raises(ValueError):
        small_modes.freqs[0] = 1.0


def test_propagate_initial_time_and_product_check():
    bath = bath_of(SMALL)
    K, masses = build_generator(SMALL)
    V0 = full_state(tms(1.0), bath, 1.0)
    out = propagate(V0, K, masses, [0.0, 1.0], recurrence_time=bath.recurrence_time, modes=normal_modes(SMALL))
    assert np.allclose(out[0].V, V0[:4, :4], rtol=1e-13, atol=1e-13)
    assert out[0].E_N == pytest.approx(2.0, abs=1e-10)
    bad = V0.copy()
    bad[0, 5] = bad[5, 0] = 0.01
    with pytest.raises(InvalidStateError):
        propagate(bad, K, masses, [0.0, 1.0])
    with pytest.raises(RecurrenceError):
        propagate(V0, K, masses, [0.0, 100.0], recurrence_time=bath.recurrence_time)


def test_propagate_dense_bath_route():
    p = ModelParams(n_modes=60)
    bath = bath_of(p)
    K, masses = build_generator(p)
    modes = normal_modes(p)
    V0 = full_state(tms(0.8), bath, 2.0)
    t = np.linspace(0, 4, 9)
    fast = np.array([x.V for x in propagate(V0, K, masses, t, modes=modes)])
    dense = evolve_system(modes, V0[:4, :4], None, None, t, bath_block=V0[4:, 4:])
    assert np.allclose(dense, fast, rtol=0, atol=1e-12)
    # correlated bath start: compare with the full propagator
    V1 = V0.copy()
    V1[4, 6] = V1[6, 4] = 1e-2
    got = propagate(V1, K, masses, t, modes=modes)
    for tk, pt in zip(t, got):
        S = modes.propagator(tk)
        assert np.allclose(pt.V, (S @ V1 @ S.T)[:4, :4], atol=1e-12)


def test_evolve_matches_propagate():
    p = ModelParams(n_modes=80)
    bath = bath_of(p)
    K, masses = build_generator(p)
    t = np.linspace(0, 5, 11)
    a = evolve(p, tms(1.0), 3.0, t)
    b = propagate(full_state(tms(1.0), bath, 3.0), K, masses, t)
    assert np.allclose([x.V for x in a], [x.V for x in b], atol=1e-12)
    with pytest.raises(RecurrenceError):
        evolve(p, tms(1.0), 3.0, [0.0, 20.0])


def test_closed_system_keeps_negativity():
    t = np.arange(0, 50.0001, 0.25)
    E = [pt.E_N for pt in evolve(CLOSED, tms(1.0), 0.0, t)]
    assert np.max(np.abs(np.array(E) - 2.0)) <= 1e-8


def test_resonant_minus_mode_is_free():
    t = np.arange(0, 50.0001, 0.5)
    V0 = tms(1.0)
    x0, p0, _, _ = np.diag(basis_change_pm(V0, "to_pm")).astype(float)
    for T in (0.0, 10.0):
        pts = evolve(SMALL, V0, T, t)
        purity = np.array([pt.purity_minus for pt in pts])
        assert np.max(np.abs(purity - 1.0)) <= 1e-6
        # free rotation at Omega_- = 1 of the initial x_- marginal
        c, s = np.cos(t), np.sin(t)
        xm = x0 * c**2 + p0 * s**2
        pm = p0 * c**2 + x0 * s**2
        got = np.array([pt.var_xm * pt.var_pm for pt in pts])
        assert np.allclose(got, xm * pm, rtol=1e-6, atol=0)


def test_trajectory_points_physical():
    t = np.linspace(0, 30, 61)
    for T in (0.0, 1.0, 10.0):
        for pt in evolve(SMALL, tms(2.0), T, t):
            assert pt.E_N >= 0
            assert pt.E_N == pytest.approx(log_negativity(pt.V, tol=1e-6), abs=1e-12)


def test_trajectory_point_rejects_unphysical():
    with pytest.raises(NumericalError):
        TrajectoryPoint.from_covariance(1.0, np.diag([0.3, 0.3, 0.5, 0.5]))


def test_stationary_dispersions_match_gibbs(fig1, fig1_modes):
    g = 2 * fig1.spectral.gamma0
    t = np.arange(40 / g, 50 / g, 0.1)
    for T in (0.0, 10.0):
        pts = evolve(fig1, tms(1.0), T, t, modes=fig1_modes)
        xp = np.mean([pt.var_xp for pt in pts])
        pp = np.mean([pt.var_pp for pt in pts])
        V = basis_change_pm(equilibrium_covariance(fig1, T=T, modes=fig1_modes), "to_pm")
        assert xp == pytest.approx(V[2, 2], rel=0.02)
        assert pp == pytest.approx(V[3, 3], rel=0.02)
        # the reduced integrator with the inverted coefficients lands on the same point
        coeffs = asymptotic_coefficients(np.sqrt(V[2, 2]), np.sqrt(V[3, 3]), g, 1.0, 1.0)
        Vr = integrate_reduced(np.eye(4) / 2, coeffs, 1.0, 0.05, 4000)[-1]
        assert np.sqrt(Vr[2, 2]) == pytest.approx(np.sqrt(xp), rel=0.03)
        assert np.sqrt(Vr[3, 3]) == pytest.approx(np.sqrt(pp), rel=0.03)


# -- reduced master equation ---------------------------------------------------

EXAMPLE = ReducedCoefficients(omega=1.0, gamma=0.3, D=0.6, f=-0.2)


def test_reduced_coefficients_validation():
    assert EXAMPLE.stationary() == pytest.approx((1.2, 1.0))
    with pytest.raises(ConfigurationError):
        ReducedCoefficients(omega=1.0, gamma=0.0, D=0.6, f=0.0)
    with pytest.raises(ConfigurationError):
        ReducedCoefficients(omega=1.0, gamma=0.3, D=-0.1, f=0.0)
    with pytest.raises(ConfigurationError):
        ReducedCoefficients(omega=1.0, gamma=0.3, D=0.6, f=5.0)


def test_reduced_fixed_point():
    x2, p2 = EXAMPLE.stationary()
    V = np.diag([0.5, 0.5, x2, p2])
    assert np.max(np.abs(reduced_master_rhs(V, EXAMPLE, 1.0)[2:, 2:])) < 1e-12
    assert np.allclose(reduced_master_step(V, EXAMPLE, 1.0, 0.01)[2:, 2:], V[2:, 2:], atol=1e-14)


@pytest.mark.parametrize(
    "V0",
    [np.eye(4) / 2, np.diag([0.1, 2.5, 7.0, 0.2]), basis_change_pm(tms(1.5), "to_pm").astype(float)],
)
def test_reduced_converges_to_stationary(V0):
    Vt = integrate_reduced(V0, EXAMPLE, 1.0, 0.05, 3000)[-1]
    assert np.sqrt(Vt[3, 3]) == pytest.approx(1.0, abs=1e-8)
    assert np.sqrt(Vt[2, 2]) == pytest.approx(np.sqrt(1.2), abs=1e-8)


def test_reduced_minus_block_rotates_freely():
    V0 = np.diag([0.1, 2.5, 7.0, 0.2])
    Vt = integrate_reduced(V0, EXAMPLE, 0.8, 0.005, 2000)[-1]
    R = local_rotation(0.8 * 10.0, 1.0, 0.8)
    assert np.allclose(Vt[:2, :2], R @ V0[:2, :2] @ R.T, rtol=0, atol=1e-8)


def test_reduced_energy_balance():
    dt, n = 0.01, 2000
    Vs = integrate_reduced(np.diag([0.5, 0.5, 3.0, 0.1]), EXAMPLE, 1.0, dt, n)
    x2, p2 = Vs[:, 2, 2], Vs[:, 3, 3]
    energy = p2 / 2 + x2 / 2
    source = -2 * EXAMPLE.gamma * p2 + EXAMPLE.D
    t = np.arange(n + 1) * dt
    for a, b in [(0, 500), (500, 1000), (1000, 2000)]:
        expected = integrate.simpson(source[a : b + 1], x=t[a : b + 1])
        assert abs(energy[b] - energy[a] - expected) / (t[b] - t[a]) < 1e-8


def test_reduced_step_fourth_order():
    V0 = np.diag([0.5, 0.5, 3.0, 0.1])
    ref = integrate_reduced(V0, EXAMPLE, 1.0, 0.001, 1000)[-1]
    e1 = np.max(np.abs(integrate_reduced(V0, EXAMPLE, 1.0, 0.1, 10)[-1] - ref))
    e2 = np.max(np.abs(integrate_reduced(V0, EXAMPLE, 1.0, 0.05, 20)[-1] - ref))
    assert 12 < e1 / e2 < 20


# -- series analysis -----------------------------------------------------------


def test_analysis_constant_series():
    t = np.linspace(0, 100, 2001)
    a = analyze_negativity(t, np.full_like(t, 0.3))
    assert a.phase_observed is ObservedPhase.NSD
    assert a.E_amp == 0.0 and a.E_mean == pytest.approx(0.3)
    assert a.death_times == [] and a.revival_times == []


def test_analysis_synthetic_sdr():
    t = np.linspace(0, 60, 6001)
    E = np.maximum(0.0, 0.1 + 0.3 * np.cos(2 * t))
    a = analyze_negativity(t, E)
    assert a.phase_observed is ObservedPhase.SDR
    assert a.period == pytest.approx(np.pi, rel=1e-3)
    events = sorted([(x, "d") for x in a.death_times] + [(x, "r") for x in a.revival_times])
    kinds = [k for _, k in events]
    assert kinds[0] == "d" and all(k1 != k2 for k1, k2 in zip(kinds, kinds[1:]))
    # first death where 0.1 + 0.3 cos 2t = 0
    assert a.death_times[0] == pytest.approx(np.arccos(-1 / 3) / 2, abs=0.01)


def test_analysis_synthetic_sd():
    t = np.linspace(0, 40, 801)
    E = np.where(t < 5, 0.5 * (5 - t), 0.0)
    a = analyze_negativity(t, E)
    assert a.phase_observed is ObservedPhase.SD
    assert len(a.death_times) == 1 and a.death_times[0] == pytest.approx(5.0, abs=0.05)
    assert a.revival_times == []


def test_analysis_never_entangled_is_sd():
    t = np.linspace(0, 10, 101)
    assert analyze_negativity(t, np.zeros_like(t)).phase_observed is ObservedPhase.SD


def test_analysis_short_window_is_undecided():
    t = np.linspace(0, 4, 401)
    E = np.maximum(0.0, 0.1 + 0.3 * np.cos(2 * t))
    # the last 25 % spans one time unit, shorter than the period
    assert analyze_negativity(t, E).phase_observed is ObservedPhase.UNDECIDED


def test_analysis_hysteresis_ignores_single_sample_chatter():
    t = np.linspace(0, 10, 101)
    E = np.full_like(t, 0.2)
    E[40] = 0.0
    a = analyze_negativity(t, E)
    assert a.death_times == [] and a.phase_observed is ObservedPhase.NSD


def test_analysis_validation():
    with pytest.raises(ValueError):
        analyze_negativity([0, 1, 2], [1, 1, 1], window=0.0)
    with pytest.raises(ValueError):
        analyze_negativity([0, 1], [1, 1])


@settings(max_examples=40, deadline=None)
@given(
    offset=st.floats(-0.5, 0.5),
    amp=st.floats(0.0, 0.5),
    omega=st.floats(0.5, 3.0),
)
def test_analysis_invariants(offset, amp, omega):
    t = np.linspace(0, 60, 3001)
    E = np.maximum(0.0, offset + amp * np.cos(omega * t))
    a = analyze_negativity(t, E)
    events = sorted([(x, 0) for x in a.death_times] + [(x, 1) for x in a.revival_times])
    assert all(k1 != k2 for (_, k1), (_, k2) in zip(events, events[1:]))
    if a.E_amp is not None:
        assert a.E_amp >= 0
    if a.phase_observed is ObservedPhase.NSD:
        assert not [x for x in a.death_times if x >= 45.0]
        assert a.E_mean - a.E_amp > EVENT_THRESHOLD * 0.5


def test_analyze_series_uses_trajectory_points():
    pts = evolve(CLOSED, tms(0.5), 0.0, np.linspace(0, 20, 41))
    a = analyze_series(pts)
    assert a.phase_observed is ObservedPhase.NSD
    assert a.E_mean == pytest.approx(1.0, abs=1e-8)
    assert set(a.to_dict()) == {"death_times", "revival_times", "E_mean", "E_amp", "period", "phase_observed"}


def test_peak_fwhm():
    x = np.linspace(-5, 5, 2001)
    sigma = 0.7
    y = np.exp(-(x**2) / (2 * sigma**2))
    assert peak_fwhm(x, y) == pytest.approx(2 * np.sqrt(2 * np.log(2)) * sigma, rel=1e-4)
    assert peak_fwhm(x, np.ones_like(x)) is None
    assert peak_fwhm(x, np.zeros_like(x)) is None
