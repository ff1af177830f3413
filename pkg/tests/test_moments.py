import numpy as np
import pytest
from scipy.linalg import expm

from homoenergetic import flows, moments
from homoenergetic.errors import NonRealLeadingEigenvalue


def kron_generator(Q, b):
    """9x9 generator of dM/dt = -QM - MQ^T - 2b(M - tr(M)/3 I) on row-major vec(M)."""
    I = np.eye(3)
    G = -np.kron(Q, I) - np.kron(I, Q)
    G -= 2 * b * (np.eye(9) - np.outer(I.ravel(), I.ravel()) / 3)
    return G


def random_spd(rng):
    X = rng.standard_normal((3, 3))
    return X @ X.T + 0.5 * np.eye(3)


def test_round_trip_vectorisation():
    M = random_spd(np.random.default_rng(0))
    assert np.array_equal(moments.vec_to_sym(moments.sym_to_vec(M)), M)


def test_operator_matches_kronecker_form():
    rng = np.random.default_rng(1)
    Q = rng.standard_normal((3, 3))
    op = moments.moment_operator(Q, 0.7)
    for _ in range(5):
        M = random_spd(rng)
        assert np.allclose(op(M), (kron_generator(Q, 0.7) @ M.ravel()).reshape(3, 3), atol=1e-13)


@pytest.mark.parametrize("method", ["rk45", "expm"])
def test_constant_Q_against_kronecker_exponential(method):
    rng = np.random.default_rng(2)
    Q = rng.standard_normal((3, 3))
    Q /= np.linalg.norm(Q, 2)
    M0 = random_spd(rng)
    ts = np.linspace(0, 5, 11)
    traj = moments.integrate_moments(M0, 1.0, ts, Q=Q, method=method)
    G = kron_generator(Q, 1.0)
    for t, M in zip(ts, traj.M):
        assert np.allclose(M, (expm(G * t) @ M0.ravel()).reshape(3, 3), rtol=1e-8, atol=1e-9)


def test_relaxation_without_flow():
    b = 0.3
    M0 = np.array([[2.0, 0.4, 0.0], [0.4, 1.0, -0.2], [0.0, -0.2, 0.5]])
    ts = np.linspace(0, 4, 9)
    traj = moments.integrate_moments(M0, b, ts, Q=np.zeros((3, 3)))
    m = np.trace(M0) / 3
    for t, M in zip(ts, traj.M):
        assert np.allclose(M, m * np.eye(3) + np.exp(-2 * b * t) * (M0 - m * np.eye(3)), atol=1e-9)


def test_flow_mode_homogeneous_dilatation_is_cooling():
    # with A = I the deviatoric part is zero and tr M decays as (1 + t)^-2
    ts = np.linspace(0, 3, 7)
    traj = moments.integrate_moments(np.eye(3), 0.2, ts, flow=np.eye(3))
    assert np.allclose(traj.trace, 3 / (1 + ts) ** 2, rtol=1e-8)


def test_simple_shear_lambda1_root():
    for K, b in [(0.1, 1.0), (3.0, 0.2), (50.0, 1.0)]:
        lam = moments.simple_shear_lambda1(K, b)
        assert lam > 1
        assert lam**3 - lam**2 == pytest.approx(K * K / (6 * b * b), rel=1e-13)
    assert moments.simple_shear_lambda1(0.0, 1.0) == 1.0


def test_eigenpair_simple_shear():
    for K in (0.1, 1.0, 3.0):
        L = flows.simple_shear(K)
        sol = moments.leading_eigenpair(L, 0.2)
        assert sol.alpha_bar == pytest.approx(0.2 * (moments.simple_shear_lambda1(K, 0.2) - 1), abs=1e-12)
        assert np.max(np.abs(moments.eigen_residual(sol, L, 0.2))) < 1e-12
        assert sol.positive_definite
        assert np.sum(sol.N_bar**2) == pytest.approx(1.0)


def test_eigenpair_no_flow_is_isotropic():
    sol = moments.leading_eigenpair(np.zeros((3, 3)), 1.0)
    assert sol.alpha_bar == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(sol.N_bar, np.eye(3) / np.sqrt(3))


def test_planar_cubic_matches_operator():
    for K in (0.0, 0.5, 2.0):
        P, _ = flows.asymptotic_generator(flows.planar_shear(K))
        for b in (0.2, 1.0, 5.0):
            assert moments.planar_shear_beta(K, b) == pytest.approx(
                moments.leading_eigenpair(P, b).alpha_bar, abs=1e-12)


def test_planar_k0_closed_form():
    for b in (0.05, 1.0, 30.0):
        c = 1 / b
        expected = b * 0.5 * (-(c + 1) + np.sqrt((c - 1) ** 2 + 8 * c / 3))
        assert moments.planar_shear_beta(0.0, b) == pytest.approx(expected, abs=1e-12)
        assert moments.planar_shear_beta_k0(b) == pytest.approx(expected, abs=1e-14)


def test_non_real_leading_eigenvalue_raises(monkeypatch):
    # physical generators keep the positive cone invariant, so force a complex top pair
    op = np.diag([-1.0, -1.0, -1.0, -1.0, 0.0, 0.0])
    op[4, 5], op[5, 4] = 1.0, -1.0
    monkeypatch.setattr(moments, "eigen_operator", lambda L, b: op)
    with pytest.raises(NonRealLeadingEigenvalue):
        moments.leading_eigenpair(np.zeros((3, 3)), 1.0)


def test_heat_flux_small_T():
    r = moments.heat_flux_rates(0.0)
    assert r.A_rate == pytest.approx(0.0, abs=1e-14)
    # (R + 3/2)^2 (R + 2/3) = 0 has largest root -2/3
    assert r.R_rate == pytest.approx(-2 / 3, abs=1e-7)
    assert r.stable


def test_heat_flux_roots_solve_polynomials():
    from numpy.polynomial import polynomial as P
    energy, first, second = moments.heat_flux_polynomials(2.0)
    r = moments.heat_flux_rates(2.0)
    assert abs(P.polyval(r.A_rate, energy)) < 1e-10
    assert min(abs(P.polyval(r.R_rate, first)), abs(P.polyval(r.R_rate, second))) < 1e-8


def test_witness_polynomial():
    x = np.linspace(0, 10, 101)
    assert np.allclose(moments.heat_flux_witness(x), 3 * x**2 + 46 * x / 9 + 4 / 3)


def test_integrate_rejects_both_or_neither():
    with pytest.raises(ValueError):
        moments.integrate_moments(np.eye(3), 1.0, [0, 1])
    with pytest.raises(ValueError):
        moments.integrate_moments(np.eye(3), 1.0, [0, 1], Q=np.eye(3), flow=np.eye(3))
