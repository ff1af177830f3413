import numpy as np
import pytest

from homoenergetic import flows, selfsim
from homoenergetic.errors import ConfigError, NotConverged
from homoenergetic.kernel import isotropic
from homoenergetic.moments import leading_eigenpair


def test_cosine_similarity():
    assert selfsim.cosine_similarity(np.eye(3), 2 * np.eye(3)) == pytest.approx(1.0)
    assert selfsim.cosine_similarity(np.diag([1, 0, 0]), np.diag([0, 1, 0])) == pytest.approx(0.0)


def test_fit_growth_exact_exponential():
    t = np.linspace(0, 10, 21)
    beta, se = selfsim.fit_growth(t, 3 * np.exp(2 * 0.37 * t))
    assert beta == pytest.approx(0.37, abs=1e-13) and se < 1e-12
    with pytest.raises(ValueError):
        selfsim.fit_growth([0, 1], [1, 2])


def test_clock():
    assert np.allclose(selfsim.clock(flows.simple_shear(1.0), [0.0, 2.0]), [0.0, 2.0])
    assert selfsim.clock(flows.planar_shear(3.0), 4.0) == pytest.approx(np.log(5.0))


def test_eigencone_initialisation():
    N_bar = leading_eigenpair(flows.simple_shear(0.3), 0.2).N_bar
    v = selfsim.init_on_eigencone(100_000, 2.0, N_bar, np.random.default_rng(0))
    assert np.allclose(v.T @ v / len(v), 2.0 * N_bar, atol=0.02)


def test_steady_state_small_run():
    k = isotropic()
    run = selfsim.run_to_steady_state(flows.simple_shear(0.1), k, selfsim.SelfSimConfig(N=10_000, seed=1))
    assert run.converged
    assert selfsim.cosine_similarity(run.M_steady, run.N_bar) > 0.995
    assert run.profile_samples.shape == (10_000, 3)


def test_not_converged_when_time_is_too_short():
    cfg = selfsim.SelfSimConfig(N=2000, seed=2, t_max=1.0, window=1.0)
    with pytest.raises(NotConverged):
        selfsim.run_to_steady_state(flows.simple_shear(0.1), isotropic(), cfg)


def test_gamma_nonzero_rejected():
    with pytest.raises(ConfigError):
        selfsim.run_to_steady_state(flows.simple_shear(0.1), isotropic(1.0))
    with pytest.raises(ConfigError):
        selfsim.measure_beta_physical(flows.simple_shear(0.1), isotropic(1.0))


def test_beta_fit_planar_shear():
    k = isotropic()
    beta, se, _ = selfsim.measure_beta_physical(flows.planar_shear(0.0), k, selfsim.BetaConfig(N=20_000, seed=3),
                                                return_se=True)
    from homoenergetic.moments import planar_shear_beta
    assert beta == pytest.approx(planar_shear_beta(0.0, k.b), abs=0.01)
