import numpy as np
import pytest

from amfce.environments import ENV_NAMES, build_env
from amfce.equilibrium import verify_amfce

L, R, C = 1, 2, 0


def test_traffic_tables():
    b = build_env("traffic")
    m = b.model
    assert (m.n_states, m.n_actions, m.n_signals, m.horizon) == (3, 2, 2, 1)
    assert m.mu0.tolist() == [1, 0, 0]
    P = m.kernel_at(m.mu0)
    assert P[L, 1, L] == 0.25 and P[R, 0, L] == 0.75
    mu = np.array([0.1, 0.6, 0.3])
    r = m.reward_at(mu)
    np.testing.assert_allclose(r[:, 0], [0, 0.6, 0.3])
    pi = b.expert_policy.table
    assert pi[0, 0, C, 0] == pytest.approx(2 / 3)
    assert pi[1, 1, L, 0] == pytest.approx(1 / 9)
    assert pi[1, 0, R, 0] == pytest.approx(8 / 9)
    np.testing.assert_allclose(b.expert_device.table, 0.5)


def test_squeeze3_kernel():
    m = build_env("squeeze3").model
    assert (m.n_states, m.n_actions, m.n_signals, m.horizon) == (3, 2, 4, 2)
    assert m.mu0.tolist() == [0, 0, 1]
    P = m.kernel_at(m.mu0)
    for s in range(3):
        np.testing.assert_allclose(P[s, 1], [0.25, 0.75, 0])
        np.testing.assert_allclose(P[s, 0], [0.75, 0.25, 0])


def test_driver_tables():
    b = build_env("driver")
    m = b.model
    assert (m.n_states, m.n_actions, m.horizon) == (2, 2, 1)
    mu = np.array([0.4, 0.6])
    r = m.reward_at(mu)
    assert r[0, 0] == pytest.approx(3 * (1 - 0.4))
    assert r[0, 1] == 0.5
    assert not np.any(r[1])
    pi = b.expert_policy.table
    np.testing.assert_array_equal(pi[0], pi[1])
    assert pi[0, 0, 0, 1] == 0.5 and pi[0, 1, 0, 1] == 1.0


@pytest.mark.parametrize("name", ENV_NAMES)
def test_kernels_are_row_stochastic(name):
    m = build_env(name).model
    rng = np.random.default_rng(0)
    for mu in [m.mu0, *rng.dirichlet(np.ones(m.n_states), size=5)]:
        P = m.kernel_at(mu)
        assert P.min() >= 0
        np.testing.assert_allclose(P.sum(-1), 1, atol=1e-12)


@pytest.mark.parametrize("name,tol", [("traffic", 1e-9), ("driver", 1e-9), ("squeeze2", 1e-6), ("squeeze3", 1e-6),
                                      ("rps", 1e-6), ("flock", 1e-6)])
def test_bundled_experts_verify(name, tol):
    b = build_env(name)
    rep = verify_amfce(b.model, b.expert_policy, b.expert_device, tol=tol)
    assert rep.is_equilibrium, rep.to_json()


def test_driver_mfce_column_verifies():
    b = build_env("driver")
    pi, dev = b.alternates["mfce"]
    assert verify_amfce(b.model, pi, dev).is_equilibrium


def test_build_is_cached_and_validates():
    assert build_env("rps") is build_env("rps")
    with pytest.raises(ValueError):
        build_env("taxai")
    with pytest.raises(ValueError):
        build_env("traffic", {"lanes": 3})
    assert build_env("traffic", {"discount": 0.9}).model.discount == 0.9
