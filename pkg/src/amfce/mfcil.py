"""Adversarial imitation of correlated mean-field behaviour.

A tabular softmax policy is trained by advantage actor-critic on the reward
-log D, where D scores (state, action, time, signal-history signature) tuples
as policy-like (D -> 1) or expert-like (D -> 0). The correlation device is a
softmax over per-step logits trained by a score-function gradient whose
per-signal values come from the critic.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch
from torch import nn

from .equilibrium import max_cip
from .mfg_core import (
    DEFAULT_CAP,
    BehavioralPolicy,
    CorrelationDevice,
    DemonstrationSet,
    MfgModel,
    check_enumerable,
    decode_prefix,
    encode_prefix,
    mean_field_flow,
    sample_batch,
)
from .signatures import embed_signal_history, signature_dimension

CLAMP = 1e-6
DTYPE = torch.float64


@dataclass
class TrainingConfig:
    actor_lr: float = 1e-2
    critic_lr: float = 1e-3
    disc_lr: float = 1e-3
    device_lr: float = 1e-2
    disc_steps: int = 5
    batch_size: int = 256
    gp_coef: float = 1.0
    iterations: int = 2000
    seed: int = 0
    sig_depth: int = 3
    disc_hidden: int = 128
    critic_hidden: int = 256
    eval_every: int = 50

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("seed", "gp_coef", "iterations"):
                if v < 0:
                    raise ValueError(f"{f.name} must be nonnegative")
            elif not v > 0:
                raise ValueError(f"{f.name} must be positive")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**doc)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PolicyParams:
    theta: np.ndarray  # logits [t, z, s, a]

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("policy logits must be finite")

    @classmethod
    def zeros(cls, model: MfgModel) -> "PolicyParams":
        return cls(np.zeros((model.horizon + 1, model.n_signals, model.n_states, model.n_actions)))

    def policy(self) -> BehavioralPolicy:
        return BehavioralPolicy(_softmax(self.theta))


@dataclass
class DeviceParams:
    phi: np.ndarray  # logits [t, z]

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if not np.all(np.isfinite(self.phi)):
            raise ValueError("device logits must be finite")

    @classmethod
    def zeros(cls, model: MfgModel) -> "DeviceParams":
        return cls(np.zeros((model.horizon + 1, model.n_signals)))

    def device(self) -> CorrelationDevice:
        return CorrelationDevice(_softmax(self.phi))


# ---------------------------------------------------------------- features

def prefix_codes(signals: np.ndarray, n_signals: int) -> np.ndarray:
    """Integer code of z_0..z_t for every row and step of a [n, T+1] signal array."""
    codes = np.empty_like(signals)
    acc = np.zeros(signals.shape[0], dtype=signals.dtype)
    for t in range(signals.shape[1]):
        acc = acc * n_signals + signals[:, t]
        codes[:, t] = acc
    return codes


class FeatureTable:
    """Precomputed discriminator and critic inputs for every (t, signal prefix, s[, a])."""

    def __init__(self, model: MfgModel, depth: int, cap: int = DEFAULT_CAP):
        T, Z, S, A = model.horizon, model.n_signals, model.n_states, model.n_actions
        check_enumerable(Z, T + 1, cap)
        self.shape = (T, Z, S, A)
        self.sig_dim = signature_dimension(Z, depth)
        self.sig = [np.stack([embed_signal_history(decode_prefix(c, t + 1, Z), Z, depth) for c in range(Z**(t + 1))])
                    for t in range(T + 1)]
        eye_s, eye_a = np.eye(S), np.eye(A)
        tnorm = [t / T if T > 0 else 0.0 for t in range(T + 1)]
        disc, crit, self.disc_off, self.crit_off = [], [], [], []
        nd = nc = 0
        for t in range(T + 1):
            K = Z**(t + 1)
            self.disc_off.append(nd)
            self.crit_off.append(nc)
            sig = np.repeat(self.sig[t], S, axis=0)  # rows (code, s)
            s_hot = np.tile(eye_s, (K, 1))
            time = np.full((K * S, 1), tnorm[t])
            crit.append(np.hstack([s_hot, time, sig]))
            d = np.hstack([np.repeat(s_hot, A, axis=0), np.tile(eye_a, (K * S, 1)),
                           np.repeat(time, A, axis=0), np.repeat(sig, A, axis=0)])
            disc.append(d)
            nd += K * S * A
            nc += K * S
        self.disc_x = torch.tensor(np.vstack(disc), dtype=DTYPE)
        self.crit_x = torch.tensor(np.vstack(crit), dtype=DTYPE)

    def disc_rows(self, t, codes, s, a) -> np.ndarray:
        _, _, S, A = self.shape
        off = np.asarray(self.disc_off)[t]
        return off + (codes * S + s) * A + a

    def crit_rows(self, t, codes, s) -> np.ndarray:
        S = self.shape[2]
        off = np.asarray(self.crit_off)[t]
        return off + codes * S + s

    def disc_view(self, values: np.ndarray, t: int) -> np.ndarray:
        """Slice of a per-row array for step t, shaped [prefix, s, a]."""
        T, Z, S, A = self.shape
        K = Z**(t + 1)
        return values[self.disc_off[t]:self.disc_off[t] + K * S * A].reshape(K, S, A)


def _step_index(batch: DemonstrationSet):
    n, steps = batch.states.shape
    return np.broadcast_to(np.arange(steps), (n, steps))


# ---------------------------------------------------------------- discriminator

class Discriminator(nn.Module):
    """Feed-forward scorer: input -> 128 -> 128 -> 128 -> 1 with leaky-ReLU, sigmoid output."""

    def __init__(self, n_states: int, n_actions: int, n_signals: int, horizon: int, sig_depth: int = 3,
                 hidden: int = 128):
        super().__init__()
        self.dims = dict(n_states=n_states, n_actions=n_actions, n_signals=n_signals, horizon=horizon,
                         sig_depth=sig_depth, hidden=hidden)
        n_in = n_states + n_actions + 1 + signature_dimension(n_signals, sig_depth)
        self.net = nn.Sequential(
            nn.Linear(n_in, hidden), nn.LeakyReLU(),
            nn.Linear(hidden, hidden), nn.LeakyReLU(),
            nn.Linear(hidden, hidden), nn.LeakyReLU(),
            nn.Linear(hidden, 1),
        ).to(DTYPE)

    @classmethod
    def for_model(cls, model: MfgModel, sig_depth: int = 3, hidden: int = 128) -> "Discriminator":
        return cls(model.n_states, model.n_actions, model.n_signals, model.horizon, sig_depth, hidden)

    def featurize(self, s: int, a: int, t: int, z_prefix) -> torch.Tensor:
        d = self.dims
        z_prefix = list(z_prefix)
        if len(z_prefix) != t + 1:
            raise ValueError("the signal prefix must hold z_0..z_t")
        T = d["horizon"]
        x = np.concatenate([np.eye(d["n_states"])[s], np.eye(d["n_actions"])[a], [t / T if T else 0.0],
                            embed_signal_history(z_prefix, d["n_signals"], d["sig_depth"])])
        return torch.tensor(x, dtype=DTYPE)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).squeeze(-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(x)).clamp(CLAMP, 1 - CLAMP)


def discriminator_forward(disc: Discriminator, s: int, a: int, t: int, z_prefix) -> float:
    with torch.no_grad():
        return float(disc(disc.featurize(s, a, t, z_prefix)))


def policy_reward(disc: Discriminator, s: int, a: int, t: int, z_prefix) -> float:
    return -math.log(discriminator_forward(disc, s, a, t, z_prefix))


def _mean(values: torch.Tensor, weights) -> torch.Tensor:
    return values.mean() if weights is None else (values * weights).sum() / weights.sum()


def discriminator_loss(disc: Discriminator, policy_x: torch.Tensor, expert_x: torch.Tensor, gp_coef: float,
                       policy_w: torch.Tensor | None = None,
                       expert_w: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor]:
    """Loss to minimise: -(E_policy log D + E_expert log(1 - D)) + gp * E_expert |d logit / dx|^2.

    Optional weights turn the sample means into weighted means (used to collapse repeated rows).
    Returns (total, adversarial part).
    """
    if len(policy_x) == 0 or len(expert_x) == 0:
        raise ValueError("discriminator batches must be non-empty")
    adv = -(_mean(torch.log(disc(policy_x)), policy_w) + _mean(torch.log(1 - disc(expert_x)), expert_w))
    if gp_coef == 0:
        return adv, adv
    x = expert_x.detach().clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(disc.logits(x).sum(), x, create_graph=True)
    return adv + gp_coef * _mean(grad.pow(2).sum(dim=-1), expert_w), adv


def discriminator_update(disc: Discriminator, optimizer: torch.optim.Optimizer, policy_x: torch.Tensor,
                         expert_x: torch.Tensor, gp_coef: float, policy_w: torch.Tensor | None = None,
                         expert_w: torch.Tensor | None = None) -> float:
    """One optimizer step on the discriminator; returns the adversarial loss before the step."""
    optimizer.zero_grad()
    loss, adv = discriminator_loss(disc, policy_x, expert_x, gp_coef, policy_w, expert_w)
    loss.backward()
    optimizer.step()
    return adv.item()


def _collapse(features: "FeatureTable", rows: np.ndarray):
    """Unique table rows with their counts; equivalent to the per-sample batch under weighted means."""
    uniq, counts = np.unique(rows.ravel(), return_counts=True)
    return features.disc_x[torch.as_tensor(uniq)], torch.as_tensor(counts, dtype=DTYPE)


# ---------------------------------------------------------------- critic and actor

class Critic(nn.Module):
    """V(t, s, signature of z_0..z_t) with two 256-unit hidden layers."""

    def __init__(self, n_in: int, hidden: int = 256):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(n_in, hidden), nn.Tanh(), nn.Linear(hidden, hidden), nn.Tanh(),
                                 nn.Linear(hidden, 1)).to(DTYPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).squeeze(-1)


def reward_to_go(rewards: np.ndarray, discount: float) -> np.ndarray:
    out = np.zeros_like(rewards)
    acc = np.zeros(rewards.shape[0])
    for t in range(rewards.shape[1] - 1, -1, -1):
        acc = rewards[:, t] + discount * acc
        out[:, t] = acc
    return out


def policy_gradient_estimate(theta: np.ndarray, batch: DemonstrationSet, weights: np.ndarray) -> np.ndarray:
    """Score-function estimate (1/n) sum_i sum_t w_it grad log pi(a_it | s_it, z_it) for softmax logits."""
    pi = _softmax(theta)
    n, steps = batch.states.shape
    t = _step_index(batch)
    z, s, a = batch.signals, batch.states, batch.actions
    score = -pi[t, z, s] * weights[..., None]
    score[np.arange(n)[:, None], np.arange(steps)[None, :], a] += weights
    grad = np.zeros_like(theta)
    np.add.at(grad, (t.ravel(), z.ravel(), s.ravel()), score.reshape(-1, theta.shape[-1]))
    return grad / n


def actor_critic_update(theta: torch.Tensor, actor_opt: torch.optim.Optimizer, critic: Critic,
                        critic_opt: torch.optim.Optimizer, batch: DemonstrationSet, rewards: np.ndarray,
                        features: FeatureTable, discount: float, codes: np.ndarray | None = None) -> dict:
    """One advantage actor-critic step: ascend theta along (reward-to-go - V) scores, one TD(0) critic step."""
    if batch.states.shape[0] == 0:
        raise ValueError("empty rollout batch")
    Z = features.shape[1]
    codes = prefix_codes(batch.signals, Z) if codes is None else codes
    rows = features.crit_rows(_step_index(batch), codes, batch.states)
    values = critic(features.crit_x)
    v = values[torch.as_tensor(rows)]
    v_np = v.detach().numpy()
    adv = reward_to_go(rewards, discount) - v_np
    grad = policy_gradient_estimate(theta.detach().numpy(), batch, adv)
    actor_opt.zero_grad()
    theta.grad = torch.as_tensor(-grad, dtype=DTYPE)
    actor_opt.step()
    nxt = np.zeros_like(v_np)
    nxt[:, :-1] = v_np[:, 1:]
    target = torch.as_tensor(rewards + discount * nxt, dtype=DTYPE)
    critic_opt.zero_grad()
    td = (v - target).pow(2).mean()
    td.backward()
    critic_opt.step()
    return {"td_loss": td.item(), "grad_norm": float(np.linalg.norm(grad))}


def exact_policy_objective(model: MfgModel, theta: np.ndarray, device: CorrelationDevice, reward_tables: list,
                           population: BehavioralPolicy) -> float:
    """E[sum_t gamma^t R_t(z_0..z_t, s_t, a_t)] for an agent on softmax(theta) against a fixed population."""
    return _exact(model, theta, device, reward_tables, population)[0]


def exact_policy_gradient(model: MfgModel, theta: np.ndarray, device: CorrelationDevice, reward_tables: list,
                          population: BehavioralPolicy) -> np.ndarray:
    """Analytic gradient of ``exact_policy_objective`` with respect to the logits."""
    return _exact(model, theta, device, reward_tables, population)[1]


def _exact(model, theta, device, reward_tables, population):
    T, Z, S, A = model.horizon, model.n_signals, model.n_states, model.n_actions
    pi = _softmax(theta)
    flow = mean_field_flow(model, population, device)
    rho = device.table
    d = [model.mu0[None, :].copy()]
    kernels, total = [], 0.0
    for t in range(T + 1):
        K = Z**t
        x = d[t][:, None, :, None] * rho[t][None, :, None, None] * pi[t][None]
        total += model.discount**t * float(np.sum(x * reward_tables[t].reshape(K, Z, S, A)))
        P = model.kernel_at(flow.mu[t])
        kernels.append(P)
        if t < T:
            d.append(np.einsum("kzsa,ksap->kzp", x, P).reshape(K * Z, S))
    grad = np.zeros_like(theta)
    v_next = None
    for t in range(T, -1, -1):
        K = Z**t
        q = reward_tables[t].reshape(K, Z, S, A).copy()
        if v_next is not None:
            q += model.discount * np.einsum("ksap,kzp->kzsa", kernels[t], v_next.reshape(K, Z, S))
        vbar = np.sum(pi[t][None] * q, axis=-1)
        w = d[t][:, None, :, None] * rho[t][None, :, None, None] * pi[t][None]
        grad[t] = model.discount**t * np.sum(w * (q - vbar[..., None]), axis=0)
        v_next = np.einsum("z,kzs->ks", rho[t], vbar)
    return total, grad


# ---------------------------------------------------------------- device

def device_gradient(phi: np.ndarray, signal_values: np.ndarray) -> np.ndarray:
    """Gradient of sum_t sum_z rho_t(z) v_t(z) for rho_t = softmax(phi_t)."""
    rho = _softmax(phi)
    return rho * (signal_values - np.sum(rho * signal_values, axis=-1, keepdims=True))


def device_objective(phi: np.ndarray, signal_values: np.ndarray) -> float:
    return float(np.sum(_softmax(phi) * signal_values))


def expected_signal_values(policy_table: np.ndarray, q: np.ndarray, state_weights: np.ndarray) -> np.ndarray:
    """v_t(z) = sum_s w_t(s) sum_a pi_t(a|s,z) Q_t(s,a,z) for q of shape [t, s, a, z]."""
    return np.einsum("ts,tzsa,tsaz->tz", state_weights, policy_table, q)


def correlation_device_update(phi: torch.Tensor, device_opt: torch.optim.Optimizer,
                              signal_values: np.ndarray) -> np.ndarray:
    """One ascent step on the device logits; returns the gradient used."""
    grad = device_gradient(phi.detach().numpy(), signal_values)
    device_opt.zero_grad()
    phi.grad = torch.as_tensor(-grad, dtype=DTYPE)
    device_opt.step()
    return grad


def critic_signal_values(critic_values: np.ndarray, features: FeatureTable, batch: DemonstrationSet,
                         codes: np.ndarray, returns: np.ndarray | None = None) -> np.ndarray:
    """Per-step, per-signal value estimates v_t(z) for the device gradient.

    The base estimate averages the critic V(t, s, prefix + z) over visited (prefix, state)
    samples. With ``returns`` (reward-to-go), the mean residual G - V of the samples that
    actually drew z is added; since z_t is drawn independently of (s_t, prefix), this
    removes the critic's per-signal bias while keeping its variance reduction.
    """
    n, steps = batch.states.shape
    Z = features.shape[1]
    out = np.empty((steps, Z))
    for t in range(steps):
        prev = codes[:, t - 1] if t > 0 else np.zeros(n, dtype=codes.dtype)
        for z in range(Z):
            rows = features.crit_rows(t, prev * Z + z, batch.states[:, t])
            out[t, z] = critic_values[rows].mean()
        if returns is not None:
            rows = features.crit_rows(t, codes[:, t], batch.states[:, t])
            resid = returns[:, t] - critic_values[rows]
            counts = np.bincount(batch.signals[:, t], minlength=Z)
            sums = np.bincount(batch.signals[:, t], weights=resid, minlength=Z)
            out[t] += np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return out


# ---------------------------------------------------------------- training

def generate_demonstrations(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice, n: int,
                            seed: int) -> DemonstrationSet:
    if n < 1:
        raise ValueError("need at least one demonstration")
    batch = sample_batch(model, policy, device, n, np.random.default_rng(seed))
    return DemonstrationSet(batch.states, batch.signals, batch.actions)


def demo_log_loss(policy_table: np.ndarray, demos: DemonstrationSet) -> float:
    """Mean negative log-likelihood of the demonstrated actions."""
    t = _step_index(demos)
    p = policy_table[t, demos.signals, demos.states, demos.actions]
    return float(-np.mean(np.log(p)))


HISTORY_COLUMNS = ("iter", "disc_loss", "mean_policy_reward", "log_loss", "max_cip_estimate")


@dataclass
class TrainingResult:
    policy_params: PolicyParams
    device_params: DeviceParams
    discriminator: Discriminator
    critic: Critic
    config: TrainingConfig
    history: list = field(default_factory=list)

    def policy(self) -> BehavioralPolicy:
        return self.policy_params.policy()

    def device(self) -> CorrelationDevice:
        return self.device_params.device()

    def to_json(self) -> dict:
        def state(m):
            return {k: v.tolist() for k, v in m.state_dict().items()}
        return {
            "config": self.config.to_json(),
            "seed": self.config.seed,
            "theta": self.policy_params.theta.tolist(),
            "phi": self.device_params.phi.tolist(),
            "discriminator": {"dims": self.discriminator.dims, "weights": state(self.discriminator)},
            "critic": {"n_in": self.critic.net[0].in_features, "hidden": self.critic.net[0].out_features,
                       "weights": state(self.critic)},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrainingResult":
        def load(module, weights):
            module.load_state_dict({k: torch.tensor(v, dtype=DTYPE) for k, v in weights.items()})
            return module
        disc = load(Discriminator(**doc["discriminator"]["dims"]), doc["discriminator"]["weights"])
        critic = load(Critic(doc["critic"]["n_in"], doc["critic"]["hidden"]), doc["critic"]["weights"])
        return cls(PolicyParams(np.array(doc["theta"])), DeviceParams(np.array(doc["phi"])), disc, critic,
                   TrainingConfig.from_json(doc["config"]))


def write_history_csv(history: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        w.writeheader()
        w.writerows(history)


def load_checkpoint(path) -> TrainingResult:
    with open(path) as fh:
        return TrainingResult.from_json(json.load(fh))


def train_mfcil(model: MfgModel, demos: DemonstrationSet, cfg: TrainingConfig | None = None,
                init: PolicyParams | None = None, callback=None) -> TrainingResult:
    """Alternate discriminator, actor-critic and device steps for ``cfg.iterations`` rounds."""
    cfg = cfg or TrainingConfig()
    demos.check(model)
    if demos.states.shape[1] != model.horizon + 1:
        raise ValueError("demonstrations do not match the model horizon")
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    with torch.random.fork_rng():
        torch.manual_seed(int(torch.randint(0, 2**31 - 1, (1,), generator=gen)))
        disc = Discriminator.for_model(model, cfg.sig_depth, cfg.disc_hidden)
        feats = FeatureTable(model, cfg.sig_depth)
        critic = Critic(feats.crit_x.shape[1], cfg.critic_hidden)
    Z = model.n_signals
    theta = torch.tensor(init.theta if init is not None else PolicyParams.zeros(model).theta, dtype=DTYPE,
                         requires_grad=True)
    phi = torch.zeros((model.horizon + 1, Z), dtype=DTYPE, requires_grad=True)
    disc_opt = torch.optim.Adam(disc.parameters(), lr=cfg.disc_lr)
    critic_opt = torch.optim.Adam(critic.parameters(), lr=cfg.critic_lr)
    actor_opt = torch.optim.Adam([theta], lr=cfg.actor_lr)
    device_opt = torch.optim.Adam([phi], lr=cfg.device_lr)

    demo_codes = prefix_codes(demos.signals, Z)
    demo_rows = feats.disc_rows(_step_index(demos), demo_codes, demos.states, demos.actions)
    history = []
    cip = float("nan")
    for it in range(cfg.iterations):
        policy = PolicyParams(theta.detach().numpy().copy()).policy()
        device = DeviceParams(phi.detach().numpy().copy()).device()
        batch = sample_batch(model, policy, device, cfg.batch_size, rng)
        codes = prefix_codes(batch.signals, Z)
        pol_rows = feats.disc_rows(_step_index(batch), codes, batch.states, batch.actions)
        pol_x, pol_w = _collapse(feats, pol_rows)
        for _ in range(cfg.disc_steps):
            pick = rng.integers(0, len(demos), size=cfg.batch_size)
            exp_x, exp_w = _collapse(feats, demo_rows[pick])
            disc_loss = discriminator_update(disc, disc_opt, pol_x, exp_x, cfg.gp_coef, pol_w, exp_w)
        with torch.no_grad():
            reward_all = -torch.log(disc(feats.disc_x)).numpy()
        rewards = reward_all[pol_rows]
        actor_critic_update(theta, actor_opt, critic, critic_opt, batch, rewards, feats, model.discount, codes)
        with torch.no_grad():
            values = critic(feats.crit_x).numpy()
        returns = reward_to_go(rewards, model.discount)
        correlation_device_update(phi, device_opt, critic_signal_values(values, feats, batch, codes, returns))

        table = _softmax(theta.detach().numpy())
        if it % cfg.eval_every == 0 or it == cfg.iterations - 1:
            cip = max_cip(model, BehavioralPolicy(table), DeviceParams(phi.detach().numpy()).device())[0]
        row = {"iter": it, "disc_loss": disc_loss, "mean_policy_reward": float(rewards.mean()),
               "log_loss": demo_log_loss(table, demos), "max_cip_estimate": cip}
        history.append(row)
        if callback is not None:
            callback(row)
    return TrainingResult(PolicyParams(theta.detach().numpy().copy()), DeviceParams(phi.detach().numpy().copy()),
                          disc, critic, cfg, history)


__all__ = [
    "TrainingConfig", "PolicyParams", "DeviceParams", "Discriminator", "Critic", "FeatureTable", "TrainingResult",
    "discriminator_forward", "discriminator_loss", "discriminator_update", "policy_reward",
    "actor_critic_update", "policy_gradient_estimate", "exact_policy_objective", "exact_policy_gradient",
    "device_gradient", "device_objective", "expected_signal_values", "correlation_device_update",
    "critic_signal_values", "generate_demonstrations", "demo_log_loss", "train_mfcil", "write_history_csv",
    "load_checkpoint", "prefix_codes", "reward_to_go", "encode_prefix",
]
