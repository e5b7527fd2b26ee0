"""Imitation metrics and checks of the CIP / imitation-gap bounds."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .equilibrium import best_response, max_cip
from .mfg_core import (
    DEFAULT_CAP,
    BehavioralPolicy,
    CorrelationDevice,
    MfgModel,
    expected_return,
    mean_field_flow,
)

WEIGHTINGS = ("expert-visitation", "uniform")


@dataclass
class LogLossResult:
    table: np.ndarray  # [t, z, s]
    weights: np.ndarray  # [t, z, s], sums to 1
    mean: float
    per_signal: np.ndarray  # [z]


def state_signal_visitation(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice,
                            cap: int = DEFAULT_CAP) -> np.ndarray:
    """P(s_t = s, z_t = z) under self-play, as a [t, z, s] array."""
    flow = mean_field_flow(model, policy, device, cap)
    out = np.empty((model.horizon + 1, model.n_signals, model.n_states))
    for t in range(model.horizon + 1):
        state = flow.prob[t] @ flow.mu[t]
        out[t] = device.table[t][:, None] * state[None, :]
    return out


def log_loss(pi_rec: BehavioralPolicy, pi_exp: BehavioralPolicy, weighting: str = "expert-visitation",
             model: MfgModel | None = None, device: CorrelationDevice | None = None) -> LogLossResult:
    """Cross-entropy E_{a ~ expert}[-log pi_rec(a|s,z)] per (t, z, s) and its weighted mean.

    A perfect match scores the expert's own entropy, not zero.
    """
    p, q = pi_exp.table, pi_rec.table
    if p.shape != q.shape:
        raise ValueError("policies live on different spaces")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(q), 0.0)
    table = terms.sum(axis=-1)
    if weighting == "uniform":
        w = np.ones_like(table)
    elif weighting == "expert-visitation":
        if model is None or device is None:
            raise ValueError("expert-visitation weighting needs the model and device")
        w = state_signal_visitation(model, pi_exp, device)
    else:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    w = w / w.sum()
    mean = float(np.sum(w * table)) if np.all(np.isfinite(table[w > 0])) else float("inf")
    with np.errstate(invalid="ignore", divide="ignore"):
        wz = w.sum(axis=(0, 2))
        per = np.where(wz > 0, np.sum(np.where(w > 0, w * table, 0.0), axis=(0, 2)) / wz, np.nan)
    return LogLossResult(table, w, mean, per)


@dataclass
class OccupancyTables:
    """eta[t][k, s, a] over full signal prefixes z_0..z_t (index k) and states[t][k, s]."""

    eta: list
    states: list


def compute_occupancy(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice,
                      cap: int = DEFAULT_CAP) -> OccupancyTables:
    flow = mean_field_flow(model, policy, device, cap)
    eta, states = [], []
    for t in range(model.horizon + 1):
        # self-play: the agent's state given the prefix is distributed as the population
        st = np.einsum("k,z,ks->kzs", flow.prob[t], device.table[t], flow.mu[t])
        joint = st[..., None] * policy.table[t][None]
        states.append(st.reshape(-1, model.n_states))
        eta.append(joint.reshape(-1, model.n_states, model.n_actions))
    return OccupancyTables(eta, states)


def _kl(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in nats (between 0 and ln 2)."""
    p, q = np.ravel(p), np.ravel(q)
    m = 0.5 * (p + q)
    return 0.5 * _kl(p, m) + 0.5 * _kl(q, m)


def measure_epsilon(model: MfgModel, policy: BehavioralPolicy, pi_exp: BehavioralPolicy,
                    device: CorrelationDevice, cap: int = DEFAULT_CAP) -> float:
    """Discounted sum of per-step JS divergences between expert and policy occupancies.

    Reported without the -2 ln 2 constant of the adversarial objective.
    """
    occ_e = compute_occupancy(model, pi_exp, device, cap)
    occ_p = compute_occupancy(model, policy, device, cap)
    return float(sum(model.discount**t * js_divergence(e, p) for t, (e, p) in enumerate(zip(occ_e.eta, occ_p.eta))))


def occupancy_l1(model: MfgModel, policy: BehavioralPolicy, pi_exp: BehavioralPolicy,
                 device: CorrelationDevice, cap: int = DEFAULT_CAP) -> float:
    occ_e = compute_occupancy(model, pi_exp, device, cap)
    occ_p = compute_occupancy(model, policy, device, cap)
    return float(sum(model.discount**t * np.abs(e - p).sum() for t, (e, p) in enumerate(zip(occ_e.eta, occ_p.eta))))


@dataclass
class BoundParams:
    L_R: float
    L_P: float
    r_max: float
    gamma: float
    T: int
    eps: float

    def __post_init__(self):
        if min(self.L_R, self.L_P, self.r_max, self.T, self.eps) < 0:
            raise ValueError("bound parameters must be nonnegative")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


def cip_bound(p: BoundParams) -> float:
    return 2 * (2 * p.L_R + p.r_max + p.gamma * p.T * p.L_P * p.r_max) * np.sqrt(2 * p.eps * p.T)


def imitation_gap_bound(p: BoundParams) -> float:
    return 2 * (3 * p.L_R + p.gamma * p.T * p.L_P * p.r_max + p.r_max) * np.sqrt(2 * p.eps * p.T)


def pinsker_rhs(eps: float, T: int) -> float:
    return 2 * np.sqrt(2 * eps * T)


def estimate_bound_params(model: MfgModel, eps: float) -> BoundParams:
    """Exact Lipschitz constants and reward bound from the model's mean-field structure."""
    return BoundParams(model.reward.lipschitz(), model.kernel.lipschitz(), model.reward.bound(),
                       model.discount, model.horizon, eps)


@dataclass
class BoundsReport:
    eps: float
    max_cip: float
    cip_bound: float
    imitation_gap: float
    imitation_gap_bound: float
    occupancy_l1: float
    pinsker_bound: float
    cip_ok: bool
    gap_ok: bool
    pinsker_ok: bool

    @property
    def passed(self) -> bool:
        return self.cip_ok and self.gap_ok and self.pinsker_ok

    def to_json(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def check_bounds(model: MfgModel, pi_rec: BehavioralPolicy, pi_exp: BehavioralPolicy,
                 device: CorrelationDevice, estimator=estimate_bound_params, slack: float = 1e-9) -> BoundsReport:
    """Measure eps, the CIP and the imitation gap of ``pi_rec`` and compare with their bounds."""
    eps = measure_epsilon(model, pi_rec, pi_exp, device)
    params = estimator(model, eps)
    cip, _ = max_cip(model, pi_rec, device)
    own = expected_return(model, pi_rec, pi_rec, device)
    br = best_response(model, pi_rec, device)
    gap = expected_return(model, br, pi_rec, device) - own
    l1 = occupancy_l1(model, pi_rec, pi_exp, device)
    cb, gb, pb = cip_bound(params), imitation_gap_bound(params), pinsker_rhs(eps, model.horizon)
    return BoundsReport(eps, cip, cb, gap, gb, l1, pb,
                        cip <= cb + slack, gap <= gb + slack, l1 <= pb + slack)
