"""Finite-horizon mean-field games with correlated signals.

Everything is index based: states, actions and signals are integers, with
names kept alongside for serialization. Mean fields are keyed by the signal
prefix ``z_0..z_{t-1}`` that produced them, encoded as a base-|Z| integer
(most significant digit first).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_CAP = 10**6
SUM_TOL = 1e-12
RENORM_TOL = 1e-9


class EnumerationTooLarge(RuntimeError):
    pass


class ZeroProbabilityObservation(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def as_distribution(p, name: str = "distribution", axis: int = -1) -> np.ndarray:
    """Validate probability vectors along ``axis``.

    Rows off by less than 1e-9 are renormalized with a warning, larger
    violations raise ``ValueError``.
    """
    p = np.array(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name}: non-finite entries")
    if np.any(p < -SUM_TOL):
        raise ValueError(f"{name}: negative entries")
    p = np.clip(p, 0.0, None)
    err = np.abs(p.sum(axis=axis) - 1.0)
    worst = float(err.max()) if err.size else 0.0
    if worst > RENORM_TOL:
        raise ValueError(f"{name}: rows must sum to 1 (off by {worst:.3g})")
    if worst > SUM_TOL:
        warnings.warn(f"{name}: renormalizing rows off by {worst:.3g}", stacklevel=2)
        p = p / p.sum(axis=axis, keepdims=True)
    return p


def check_enumerable(n_signals: int, horizon: int, cap: int = DEFAULT_CAP):
    size = n_signals ** (horizon + 1)
    if size > cap:
        raise EnumerationTooLarge(f"|Z|^(T+1) = {size} exceeds cap {cap}")


def encode_prefix(prefix: Sequence[int], n_signals: int) -> int:
    k = 0
    for z in prefix:
        k = k * n_signals + int(z)
    return k


def decode_prefix(k: int, length: int, n_signals: int) -> tuple[int, ...]:
    out = []
    for _ in range(length):
        k, z = divmod(k, n_signals)
        out.append(z)
    return tuple(reversed(out))


# ---------------------------------------------------------------- rewards


@dataclass(frozen=True)
class AffineReward:
    """r(s, a, mu) = base[s, a] + coef[s, a, :] @ mu."""

    base: np.ndarray
    coef: np.ndarray

    def __call__(self, mu: np.ndarray) -> np.ndarray:
        return self.base + np.einsum("ijk,...k->...ij", self.coef, mu)

    def lipschitz(self) -> float:
        # operator norm from (simplex, L1) to R of a linear map is its max |entry|
        return float(np.abs(self.coef).max()) if self.coef.size else 0.0

    def bound(self) -> float:
        # affine in mu, so the extremes sit on simplex vertices
        vertex_values = self.base[..., None] + self.coef
        return float(np.abs(vertex_values).max())

    def to_json(self) -> dict:
        return {"base": self.base.tolist(), "mean_field_coef": self.coef.tolist()}


@dataclass(frozen=True)
class FlockReward:
    """r(s, a, mu) = -|v_a - sum_s' mu(s') w_s'|^2 (velocity alignment)."""

    action_velocities: np.ndarray
    state_velocities: np.ndarray

    def __call__(self, mu: np.ndarray) -> np.ndarray:
        mean_v = mu @ self.state_velocities
        diff = self.action_velocities - mean_v[..., None, :]
        r = -np.sum(diff**2, axis=-1)
        n_states = self.state_velocities.shape[0]
        return np.broadcast_to(r[..., None, :], r.shape[:-1] + (n_states, r.shape[-1])).copy()

    def _radius(self):
        va = np.linalg.norm(self.action_velocities, axis=-1).max()
        ws = np.linalg.norm(self.state_velocities, axis=-1).max()
        return va, ws

    def lipschitz(self) -> float:
        # |r(mu) - r(nu)| = |(m_mu - m_nu).(2v - m_mu - m_nu)| <= 2(|v| + |w|)|w| |mu - nu|_1
        va, ws = self._radius()
        return float(2.0 * (va + ws) * ws)

    def bound(self) -> float:
        va, ws = self._radius()
        return float((va + ws) ** 2)

    def to_json(self) -> dict:
        return {
            "builtin": "flock",
            "action_velocities": self.action_velocities.tolist(),
            "state_velocities": self.state_velocities.tolist(),
        }


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class TableKernel:
    table: np.ndarray  # [s, a, s']

    def __call__(self, mu: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.table, mu.shape[:-1] + self.table.shape)

    def lipschitz(self) -> float:
        return 0.0

    def to_json(self):
        return self.table.tolist()


@dataclass(frozen=True)
class AffineKernel:
    """P(s'|s, a, mu) = base[s, a, s'] + coef[s, a, s', :] @ mu."""

    base: np.ndarray
    coef: np.ndarray

    def __call__(self, mu: np.ndarray) -> np.ndarray:
        return self.base + np.einsum("ijkl,...l->...ijk", self.coef, mu)

    def lipschitz(self) -> float:
        # L1 -> L1 operator norm: max column sum of |coef|
        return float(np.abs(self.coef).sum(axis=2).max()) if self.coef.size else 0.0

    def to_json(self):
        return {"base": self.base.tolist(), "mean_field_coef": self.coef.tolist()}


# ---------------------------------------------------------------- model


@dataclass(frozen=True)
class MfgModel:
    states: tuple[str, ...]
    actions: tuple[str, ...]
    signals: tuple[str, ...]
    horizon: int
    mu0: np.ndarray
    kernel: object
    reward: object
    discount: float = 1.0

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        mu0 = as_distribution(self.mu0, "mu0")
        if mu0.shape != (self.n_states,):
            raise DimensionMismatch(f"mu0 has shape {mu0.shape}, expected ({self.n_states},)")
        object.__setattr__(self, "mu0", mu0)
        self._check_kernel()

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_signals(self) -> int:
        return len(self.signals)

    def _check_kernel(self):
        # affine/table kernels are extremal on simplex vertices
        vertices = np.vstack([np.eye(self.n_states), self.mu0])
        P = self.kernel(vertices)
        if P.shape[1:] != (self.n_states, self.n_actions, self.n_states):
            raise DimensionMismatch(f"kernel shape {P.shape[1:]} does not match model spaces")
        if np.any(P < -SUM_TOL) or np.abs(P.sum(-1) - 1).max() > SUM_TOL:
            raise ValueError("kernel rows must be nonnegative and sum to 1")
        R = self.reward(vertices)
        if R.shape[1:] != (self.n_states, self.n_actions):
            raise DimensionMismatch(f"reward shape {R.shape[1:]} does not match model spaces")

    def kernel_at(self, mu: np.ndarray) -> np.ndarray:
        return self.kernel(np.asarray(mu, dtype=float))

    def reward_at(self, mu: np.ndarray) -> np.ndarray:
        return self.reward(np.asarray(mu, dtype=float))

    def with_signals(self, n_signals: int) -> "MfgModel":
        return MfgModel(
            states=self.states,
            actions=self.actions,
            signals=tuple(str(z) for z in range(n_signals)),
            horizon=self.horizon,
            mu0=self.mu0,
            kernel=self.kernel,
            reward=self.reward,
            discount=self.discount,
        )

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "signals": list(self.signals),
            "horizon": self.horizon,
            "discount": self.discount,
            "mu0": self.mu0.tolist(),
            "kernel": self.kernel.to_json(),
            "reward": self.reward.to_json(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MfgModel":
        kern = doc["kernel"]
        if isinstance(kern, dict):
            kernel = AffineKernel(np.array(kern["base"], float), np.array(kern["mean_field_coef"], float))
        else:
            kernel = TableKernel(np.array(kern, float))
        rew = doc["reward"]
        if isinstance(rew, dict) and rew.get("builtin") == "flock":
            reward = FlockReward(np.array(rew["action_velocities"], float), np.array(rew["state_velocities"], float))
        elif isinstance(rew, dict) and "builtin" in rew:
            raise ValueError(f"unknown reward builtin {rew['builtin']!r}")
        elif isinstance(rew, dict):
            base = np.array(rew["base"], float)
            coef = rew.get("mean_field_coef")
            coef = np.zeros(base.shape + (len(doc["states"]),)) if coef is None else np.array(coef, float)
            reward = AffineReward(base, coef)
        else:
            base = np.array(rew, float)
            reward = AffineReward(base, np.zeros(base.shape + (len(doc["states"]),)))
        return cls(
            states=tuple(doc["states"]),
            actions=tuple(doc["actions"]),
            signals=tuple(str(z) for z in doc["signals"]),
            horizon=int(doc["horizon"]),
            mu0=np.array(doc["mu0"], float),
            kernel=kernel,
            reward=reward,
            discount=float(doc.get("discount", 1.0)),
        )

    @classmethod
    def load(cls, path) -> "MfgModel":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- policies


@dataclass(frozen=True)
class BehavioralPolicy:
    """table[t, z, s, a] = pi_t(a | s, z)."""

    table: np.ndarray

    def __post_init__(self):
        tab = as_distribution(self.table, "policy")
        if tab.ndim != 4:
            raise DimensionMismatch("policy table must be [t, z, s, a]")
        object.__setattr__(self, "table", tab)

    def __getitem__(self, t):
        return self.table[t]

    @classmethod
    def uniform(cls, model: MfgModel) -> "BehavioralPolicy":
        shape = (model.horizon + 1, model.n_signals, model.n_states, model.n_actions)
        return cls(np.full(shape, 1.0 / model.n_actions))

    @classmethod
    def deterministic(cls, model: MfgModel, action: int) -> "BehavioralPolicy":
        tab = np.zeros((model.horizon + 1, model.n_signals, model.n_states, model.n_actions))
        tab[..., action] = 1.0
        return cls(tab)

    def check(self, model: MfgModel):
        want = (model.horizon + 1, model.n_signals, model.n_states, model.n_actions)
        if self.table.shape != want:
            raise DimensionMismatch(f"policy shape {self.table.shape}, expected {want}")

    def to_json(self) -> dict:
        return {"policy": self.table.tolist()}

    @classmethod
    def from_json(cls, doc) -> "BehavioralPolicy":
        return cls(np.array(doc["policy"] if isinstance(doc, dict) else doc, float))


@dataclass(frozen=True)
class CorrelationDevice:
    """table[t, z] = rho_t(z)."""

    table: np.ndarray

    def __post_init__(self):
        tab = as_distribution(self.table, "device")
        if tab.ndim != 2:
            raise DimensionMismatch("device table must be [t, z]")
        object.__setattr__(self, "table", tab)

    def __getitem__(self, t):
        return self.table[t]

    @classmethod
    def uniform(cls, model: MfgModel) -> "CorrelationDevice":
        return cls(np.full((model.horizon + 1, model.n_signals), 1.0 / model.n_signals))

    @classmethod
    def dirac(cls, model: MfgModel, z: int = 0) -> "CorrelationDevice":
        tab = np.zeros((model.horizon + 1, model.n_signals))
        tab[:, z] = 1.0
        return cls(tab)

    def check(self, model: MfgModel):
        want = (model.horizon + 1, model.n_signals)
        if self.table.shape != want:
            raise DimensionMismatch(f"device shape {self.table.shape}, expected {want}")

    def to_json(self) -> dict:
        return {"device": self.table.tolist()}

    @classmethod
    def from_json(cls, doc) -> "CorrelationDevice":
        return cls(np.array(doc["device"] if isinstance(doc, dict) else doc, float))


# ---------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    states: np.ndarray
    signals: np.ndarray
    actions: np.ndarray
    mean_fields: np.ndarray | None = None

    def __len__(self):
        return len(self.states)

    def to_json(self) -> dict:
        steps = [
            {"t": t, "s": int(s), "z": int(z), "a": int(a)}
            for t, (s, z, a) in enumerate(zip(self.states, self.signals, self.actions))
        ]
        return {"steps": steps}


@dataclass
class DemonstrationSet:
    """Batch of trajectories stored as [n, T+1] index arrays."""

    states: np.ndarray
    signals: np.ndarray
    actions: np.ndarray
    mean_fields: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, i) -> Trajectory:
        mf = None if self.mean_fields is None else self.mean_fields[i]
        return Trajectory(self.states[i], self.signals[i], self.actions[i], mf)

    def check(self, model: MfgModel):
        n_steps = model.horizon + 1
        if self.states.ndim != 2 or self.states.shape[1] != n_steps:
            raise DimensionMismatch(f"demonstrations need {n_steps} steps per trajectory")
        for arr, size, name in (
            (self.states, model.n_states, "state"),
            (self.signals, model.n_signals, "signal"),
            (self.actions, model.n_actions, "action"),
        ):
            if arr.size and (arr.min() < 0 or arr.max() >= size):
                raise DimensionMismatch(f"{name} index out of range")

    def to_jsonl(self) -> str:
        lines = [json.dumps(self[i].to_json(), separators=(",", ":")) for i in range(len(self))]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "DemonstrationSet":
        rows = []
        for line in text.splitlines():
            if not line.strip():
                continue
            steps = sorted(json.loads(line)["steps"], key=lambda st: st["t"])
            if [st["t"] for st in steps] != list(range(len(steps))):
                raise DimensionMismatch("trajectory steps must cover t = 0..T")
            rows.append([(st["s"], st["z"], st["a"]) for st in steps])
        if len({len(r) for r in rows}) > 1:
            raise DimensionMismatch("trajectories have different lengths")
        arr = np.array(rows, dtype=np.int64).reshape(len(rows), -1, 3)
        return cls(arr[..., 0], arr[..., 1], arr[..., 2])

    @classmethod
    def load(cls, path) -> "DemonstrationSet":
        return cls.from_jsonl(Path(path).read_text())


# ---------------------------------------------------------------- dynamics


def propagate_mean_field(mu, policy_t, z: int, model: MfgModel) -> np.ndarray:
    """One McKean-Vlasov step: sum_{s,a} mu(s) pi_t(a|s,z) P(.|s,a,mu)."""
    mu = np.asarray(mu, dtype=float)
    policy_t = np.asarray(policy_t, dtype=float)
    if policy_t.shape != (model.n_signals, model.n_states, model.n_actions):
        raise DimensionMismatch(f"policy slice shape {policy_t.shape} does not match model")
    if not 0 <= z < model.n_signals:
        raise IndexError(f"signal {z} out of range")
    P = model.kernel_at(mu)
    return np.einsum("s,sa,sap->p", mu, policy_t[z], P)


def predict_signal_posterior(rho_t, policy_t, s: int, a: int) -> np.ndarray:
    """Posterior over the current signal after observing recommendation ``a`` at ``s``."""
    rho_t = np.asarray(rho_t, dtype=float)
    lik = np.asarray(policy_t, dtype=float)[:, s, a]
    joint = rho_t * lik
    total = joint.sum()
    if total <= 0:
        raise ZeroProbabilityObservation(f"recommendation {a} at state {s} has zero probability")
    return joint / total


@dataclass
class MeanFieldFlow:
    """Population flow keyed by signal prefix: mu[t] is [|Z|^t, S], prob[t] is [|Z|^t]."""

    mu: list
    prob: list


def mean_field_flow(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice,
                    cap: int = DEFAULT_CAP) -> MeanFieldFlow:
    check_enumerable(model.n_signals, model.horizon, cap)
    pi, rho = table_of(policy), table_of(device)
    mus, probs = [model.mu0[None, :]], [np.ones(1)]
    for t in range(model.horizon):
        mu = mus[-1]
        P = model.kernel_at(mu)
        nxt = np.einsum("ks,zsa,ksap->kzp", mu, pi[t], P)
        mus.append(nxt.reshape(-1, model.n_states))
        probs.append((probs[-1][:, None] * rho[t][None, :]).ravel())
    return MeanFieldFlow(mus, probs)


def table_of(obj) -> np.ndarray:
    """Raw table of a policy/device object, or the array itself."""
    return getattr(obj, "table", obj)


def _check_inputs(model, *objs):
    for obj in objs:
        obj.check(model)


def expected_return(model: MfgModel, agent: BehavioralPolicy, population: BehavioralPolicy,
                    device: CorrelationDevice, cap: int = DEFAULT_CAP, fallback: bool = False,
                    n_samples: int = 100_000, seed: int = 0) -> float:
    """Exact J(agent, population, device) by enumerating signal prefixes.

    With ``fallback=True`` an oversized instance is estimated by Monte Carlo
    instead of raising ``EnumerationTooLarge``.
    """
    _check_inputs(model, agent, population, device)
    try:
        flow = mean_field_flow(model, population, device, cap)
    except EnumerationTooLarge:
        if not fallback:
            raise
        mean, se = estimate_return(model, agent, population, device, n_samples, seed)
        warnings.warn(f"enumeration too large, Monte Carlo estimate (stderr {se:.3g})", stacklevel=2)
        return mean
    pi, rho = agent.table, device.table
    x = model.mu0[None, :]  # agent state distribution conditional on the prefix
    total = 0.0
    for t in range(model.horizon + 1):
        mu = flow.mu[t]
        r = model.reward_at(mu)
        ra = np.einsum("zsa,ksa->kzs", pi[t], r)
        step = np.einsum("k,z,ks,kzs->", flow.prob[t], rho[t], x, ra)
        total += model.discount**t * step
        if t < model.horizon:
            P = model.kernel_at(mu)
            x = np.einsum("ks,zsa,ksap->kzp", x, pi[t], P).reshape(-1, model.n_states)
    return float(total)


# ---------------------------------------------------------------- sampling


def _draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    idx = (u[:, None] >= cdf).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_batch(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice, n: int,
                 rng: np.random.Generator, population: BehavioralPolicy | None = None,
                 keep_mean_fields: bool = False) -> DemonstrationSet:
    """Sample ``n`` agent trajectories; the mean field follows ``population`` (default: ``policy``)."""
    _check_inputs(model, policy, device)
    population = policy if population is None else population
    population.check(model)
    T, S = model.horizon, model.n_states
    states = np.empty((n, T + 1), dtype=np.int64)
    signals = np.empty_like(states)
    actions = np.empty_like(states)
    mfs = np.empty((n, T + 1, S)) if keep_mean_fields else None
    rows = np.arange(n)
    mu = np.broadcast_to(model.mu0, (n, S)).copy()
    s = _draw(np.broadcast_to(model.mu0, (n, S)), rng.random(n))
    for t in range(T + 1):
        z = _draw(np.broadcast_to(device.table[t], (n, model.n_signals)), rng.random(n))
        a = _draw(policy.table[t][z, s], rng.random(n))
        states[:, t], signals[:, t], actions[:, t] = s, z, a
        if keep_mean_fields:
            mfs[:, t] = mu
        if t < T:
            P = model.kernel_at(mu)
            s = _draw(P[rows, s, a], rng.random(n))
            mu = np.einsum("ns,nsa,nsap->np", mu, population.table[t][z], P)
    return DemonstrationSet(states, signals, actions, mfs)


def sample_trajectory(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice,
                      seed: int) -> Trajectory:
    batch = sample_batch(model, policy, device, 1, np.random.default_rng(seed), keep_mean_fields=True)
    return batch[0]


def trajectory_returns(model: MfgModel, batch: DemonstrationSet) -> np.ndarray:
    """Discounted return of each sampled trajectory (needs stored mean fields)."""
    if batch.mean_fields is None:
        raise ValueError("batch was sampled without mean fields")
    n, steps = batch.states.shape
    rows = np.arange(n)
    total = np.zeros(n)
    for t in range(steps):
        r = model.reward_at(batch.mean_fields[:, t])
        total += model.discount**t * r[rows, batch.states[:, t], batch.actions[:, t]]
    return total


def estimate_return(model: MfgModel, agent: BehavioralPolicy, population: BehavioralPolicy,
                    device: CorrelationDevice, n: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of J with its standard error."""
    batch = sample_batch(model, agent, device, n, np.random.default_rng(seed), population=population,
                         keep_mean_fields=True)
    g = trajectory_returns(model, batch)
    return float(g.mean()), float(g.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
