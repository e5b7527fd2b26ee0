import json

import numpy as np
import pytest
import torch

from amfce.environments import build_env
from amfce.evaluation import log_loss
from amfce.mfcil import (
    Critic,
    DeviceParams,
    Discriminator,
    FeatureTable,
    PolicyParams,
    TrainingConfig,
    TrainingResult,
    actor_critic_update,
    correlation_device_update,
    demo_log_loss,
    device_gradient,
    discriminator_forward,
    discriminator_loss,
    discriminator_update,
    exact_policy_gradient,
    expected_signal_values,
    generate_demonstrations,
    policy_gradient_estimate,
    policy_reward,
    prefix_codes,
    reward_to_go,
    train_mfcil,
)
from amfce.mfg_core import AffineReward, BehavioralPolicy, CorrelationDevice, MfgModel, TableKernel, sample_batch
from factories import random_device, random_model
from _gradients import CHECKS, random_inputs, small_disc
from _training import SEEDS, trained



def zero_weights(disc):
    with torch.no_grad():
        for p in disc.parameters():
            p.zero_()


# ---------------------------------------------------------------- discriminator

def test_zero_discriminator_scores_one_half():
    disc = Discriminator(3, 2, 2, 1)
    zero_weights(disc)
    for s, a, t, z in [(0, 0, 0, [0]), (2, 1, 1, [1, 0]), (1, 1, 1, [1, 1])]:
        assert discriminator_forward(disc, s, a, t, z) == 0.5
        assert policy_reward(disc, s, a, t, z) == pytest.approx(np.log(2))


def test_discriminator_is_deterministic_and_clamped():
    torch.manual_seed(0)
    disc = Discriminator(3, 2, 2, 1)
    assert discriminator_forward(disc, 1, 0, 1, [0, 1]) == discriminator_forward(disc, 1, 0, 1, [0, 1])
    with torch.no_grad():
        disc.net[-1].bias.fill_(100.0)
    assert discriminator_forward(disc, 1, 0, 1, [0, 1]) == 1 - 1e-6
    assert 0 < policy_reward(disc, 1, 0, 1, [0, 1]) <= 1.1e-6
    with torch.no_grad():
        disc.net[-1].bias.fill_(-100.0)
    assert discriminator_forward(disc, 1, 0, 1, [0, 1]) == 1e-6
    with pytest.raises(ValueError):
        disc.featurize(0, 0, 1, [0])


def test_reward_at_quarter():
    disc = Discriminator(3, 2, 2, 1)
    zero_weights(disc)
    with torch.no_grad():
        disc.net[-1].bias.fill_(float(np.log(1 / 3)))
    assert policy_reward(disc, 0, 0, 0, [1]) == pytest.approx(1.3863, abs=1e-4)


def test_symmetric_batches_give_zero_adversarial_gradient():
    rng = np.random.default_rng(0)
    disc, Z, T = small_disc(rng)
    zero_weights(disc)
    x = random_inputs(rng, disc, Z, T, 16)
    _, adv = discriminator_loss(disc, x, x.clone(), gp_coef=0.0)
    grads = torch.autograd.grad(adv, list(disc.parameters()))
    assert max(g.abs().max().item() for g in grads) <= 1e-12


def test_update_separates_disjoint_supports():
    torch.manual_seed(1)
    disc = Discriminator(3, 2, 2, 1)
    pol = torch.stack([disc.featurize(0, 0, 0, [0]), disc.featurize(1, 0, 1, [0, 0])])
    exp = torch.stack([disc.featurize(2, 1, 0, [1]), disc.featurize(1, 1, 1, [1, 1])])
    opt = torch.optim.Adam(disc.parameters(), lr=1e-3)
    before = disc(pol).mean().item()
    discriminator_update(disc, opt, pol, exp, gp_coef=10.0)
    assert disc(pol).mean().item() > before
    with pytest.raises(ValueError):
        discriminator_update(disc, opt, pol[:0], exp, gp_coef=1.0)


@pytest.mark.parametrize("check", CHECKS, ids=lambda f: f.__name__)
def test_gradients_match_finite_differences(check):
    errors = [check(seed) for seed in range(20)]
    assert max(errors) <= 1e-4, errors


# ---------------------------------------------------------------- actor

def bandit_model(rewards_by_action, horizon=0, signals=1):
    A = len(rewards_by_action)
    return MfgModel(("s",), tuple(map(str, range(A))), tuple(map(str, range(signals))), horizon, np.array([1.0]),
                    TableKernel(np.ones((1, A, 1))),
                    AffineReward(np.array([rewards_by_action], dtype=float), np.zeros((1, A, 1))))


def test_bandit_converges_to_rewarding_action():
    m = bandit_model([1.0, 0.0])
    torch.manual_seed(0)
    feats = FeatureTable(m, 2)
    critic = Critic(feats.crit_x.shape[1])
    theta = torch.zeros((1, 1, 1, 2), dtype=torch.float64, requires_grad=True)
    actor_opt = torch.optim.Adam([theta], lr=1e-2)
    critic_opt = torch.optim.Adam(critic.parameters(), lr=1e-3)
    rng = np.random.default_rng(0)
    dev = CorrelationDevice.dirac(m)
    for step in range(2000):
        pi = PolicyParams(theta.detach().numpy().copy()).policy()
        batch = sample_batch(m, pi, dev, 64, rng)
        rewards = (batch.actions == 0).astype(float)
        actor_critic_update(theta, actor_opt, critic, critic_opt, batch, rewards, feats, 1.0)
        if pi.table[0, 0, 0, 0] > 0.99:
            break
    assert PolicyParams(theta.detach().numpy()).policy().table[0, 0, 0, 0] > 0.99


def test_constant_reward_gradient_has_zero_mean():
    m = bandit_model([0.0, 0.0, 0.0], horizon=1)
    rng = np.random.default_rng(3)
    theta = rng.normal(size=(2, 1, 1, 3))
    pi = PolicyParams(theta).policy()
    dev = CorrelationDevice.dirac(m)
    norms = []
    for n in (1_000, 100_000):
        batch = sample_batch(m, pi, dev, n, rng)
        g = policy_gradient_estimate(theta, batch, reward_to_go(np.ones((n, 2)), 1.0))
        norms.append(np.linalg.norm(g))
    assert norms[1] < norms[0]
    assert norms[1] < 0.05
    with pytest.raises(ValueError):
        feats = FeatureTable(m, 2)
        empty = sample_batch(m, pi, dev, 1, rng)
        empty = type(empty)(empty.states[:0], empty.signals[:0], empty.actions[:0])
        actor_critic_update(torch.zeros(2, 1, 1, 3, dtype=torch.float64, requires_grad=True),
                            torch.optim.Adam([torch.zeros(1, requires_grad=True)]), Critic(feats.crit_x.shape[1]),
                            torch.optim.Adam([torch.zeros(1, requires_grad=True)]), empty, np.zeros((0, 2)), feats, 1.0)


def test_sampled_policy_gradient_matches_exact():
    rng = np.random.default_rng(4)
    m = random_model(rng, n_states=2, n_actions=2, n_signals=2, horizon=1)
    T, Z, S, A = m.horizon, m.n_signals, m.n_states, m.n_actions
    theta = rng.normal(size=(T + 1, Z, S, A))
    dev = random_device(rng, m)
    pi = PolicyParams(theta).policy()
    tables = [rng.normal(size=(Z ** (t + 1), S, A)) for t in range(T + 1)]
    exact = exact_policy_gradient(m, theta, dev, tables, pi)
    chunks, size = 100, 1_000
    ests = []
    for _ in range(chunks):
        batch = sample_batch(m, pi, dev, size, rng)
        codes = prefix_codes(batch.signals, Z)
        r = np.stack([tables[t][codes[:, t], batch.states[:, t], batch.actions[:, t]] for t in range(T + 1)], axis=1)
        ests.append(policy_gradient_estimate(theta, batch, reward_to_go(r, m.discount)))
    ests = np.array(ests)
    mean, se = ests.mean(0), ests.std(0, ddof=1) / np.sqrt(chunks)
    assert np.all(np.abs(mean - exact) <= 3 * se + 1e-12)


# ---------------------------------------------------------------- device

def test_signal_blind_policy_gives_zero_device_gradient():
    rng = np.random.default_rng(5)
    pi_row = rng.dirichlet(np.ones(2), size=(2, 1, 3))
    table = np.repeat(pi_row, 2, axis=1)
    q = np.repeat(rng.normal(size=(2, 3, 2, 1)), 2, axis=-1)
    vals = expected_signal_values(table, q, rng.dirichlet(np.ones(3), size=2))
    np.testing.assert_allclose(device_gradient(rng.normal(size=(2, 2)), vals), 0, atol=1e-15)


def test_favoured_signal_gains_mass_monotonically():
    phi = torch.zeros((1, 2), dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([phi], lr=1e-2)
    vals = np.array([[1.0, 0.2]])
    prev = 0.5
    for _ in range(200):
        correlation_device_update(phi, opt, vals)
        cur = DeviceParams(phi.detach().numpy()).device().table[0, 0]
        assert cur > prev
        prev = cur


def test_single_signal_device_update_is_noop():
    phi = torch.zeros((3, 1), dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([phi], lr=1e-2)
    for _ in range(5):
        correlation_device_update(phi, opt, np.random.default_rng(0).normal(size=(3, 1)))
    assert torch.all(phi == 0)


# ---------------------------------------------------------------- demonstrations and training

def test_deterministic_demonstration_is_unique():
    m = build_env("rps").model
    d = generate_demonstrations(m, BehavioralPolicy.deterministic(m, 2), CorrelationDevice.dirac(m), 1, seed=5)
    np.testing.assert_array_equal(d.states, [[0, 3]])
    np.testing.assert_array_equal(d.actions, [[2, 2]])
    with pytest.raises(ValueError):
        generate_demonstrations(m, BehavioralPolicy.deterministic(m, 2), CorrelationDevice.dirac(m), 0, seed=5)


def test_traffic_demonstrations():
    b = build_env("traffic")
    d = generate_demonstrations(b.model, b.expert_policy, b.expert_device, 100_000, seed=0)
    sel = d.signals[:, 0] == 0
    assert abs(np.mean(d.actions[sel, 0] == 0) - 2 / 3) <= 0.01
    again = generate_demonstrations(b.model, b.expert_policy, b.expert_device, 100, seed=3)
    assert again.to_jsonl() == generate_demonstrations(b.model, b.expert_policy, b.expert_device, 100, seed=3).to_jsonl()


def test_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(actor_lr=0)
    with pytest.raises(ValueError):
        TrainingConfig.from_json({"actor_lr": 1e-3, "momentum": 0.9})
    assert TrainingConfig.from_json(TrainingConfig(seed=4).to_json()) == TrainingConfig(seed=4)


def test_zero_iterations_returns_initial_parameters_and_round_trips():
    b = build_env("squeeze3")
    demos = generate_demonstrations(b.model, b.expert_policy, b.expert_device, 50, seed=0)
    res = train_mfcil(b.model, demos, TrainingConfig(iterations=0))
    assert res.history == []
    assert not np.any(res.policy_params.theta) and not np.any(res.device_params.phi)
    doc = json.loads(json.dumps(res.to_json()))
    again = TrainingResult.from_json(doc)
    assert json.dumps(again.to_json()) == json.dumps(doc)
    with pytest.raises(Exception):
        train_mfcil(build_env("traffic").model, demos, TrainingConfig(iterations=0))


def test_self_imitation_keeps_log_loss():
    m = build_env("traffic").model
    uni = BehavioralPolicy.uniform(m)
    demos = generate_demonstrations(m, uni, CorrelationDevice.uniform(m), 2000, seed=0)
    start = demo_log_loss(uni.table, demos)
    res = train_mfcil(m, demos, TrainingConfig(iterations=200, seed=0))
    assert abs(res.history[-1]["log_loss"] - start) <= 0.05
    assert all(np.isfinite(v) for row in res.history for v in row.values())


def test_same_seed_reproduces_training():
    b = build_env("traffic")
    demos = generate_demonstrations(b.model, b.expert_policy, b.expert_device, 500, seed=0)
    runs = [train_mfcil(b.model, demos, TrainingConfig(iterations=20, seed=9)) for _ in range(2)]
    assert json.dumps(runs[0].to_json()) == json.dumps(runs[1].to_json())
    assert runs[0].history == runs[1].history


@pytest.mark.slow
def test_traffic_log_loss_halves_within_default_budget():
    b = build_env("traffic")
    ratios = []
    for seed in SEEDS:
        res = trained("traffic", seed)
        init = log_loss(BehavioralPolicy.uniform(b.model), b.expert_policy, model=b.model,
                        device=b.expert_device).mean
        final = log_loss(res.policy(), b.expert_policy, model=b.model, device=b.expert_device).mean
        ratios.append(final / init)
    assert np.median(ratios) <= 0.5, ratios
