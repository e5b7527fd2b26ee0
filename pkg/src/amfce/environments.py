"""Bundled benchmark games.

Traffic and driver ship hand-written ground-truth pairs; squeeze, rps and
flock experts are solved at build time and cached per process.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import solve_amfce_fixed_point
from .mfg_core import AffineReward, BehavioralPolicy, CorrelationDevice, FlockReward, MfgModel, TableKernel

ENV_NAMES = ("traffic", "squeeze2", "squeeze3", "rps", "flock", "driver")


@dataclass
class EnvironmentBundle:
    name: str
    model: MfgModel
    expert_policy: BehavioralPolicy | None = None
    expert_device: CorrelationDevice | None = None
    notes: str = ""
    alternates: dict = field(default_factory=dict)


def _affine(n_states, n_actions):
    return np.zeros((n_states, n_actions)), np.zeros((n_states, n_actions, n_states))


def _traffic(discount):
    C, L, R = 0, 1, 2
    table = np.zeros((3, 2, 3))
    p_left = {(C, 0): 1.0, (C, 1): 0.0, (L, 0): 1.0, (L, 1): 0.25, (R, 0): 0.75, (R, 1): 0.0}
    for (s, a), p in p_left.items():
        table[s, a, L], table[s, a, R] = p, 1.0 - p
    base, coef = _affine(3, 2)
    coef[L, :, L] = 1.0
    coef[R, :, R] = 1.0
    model = MfgModel(("C", "L", "R"), ("L", "R"), ("0", "1"), 1, np.array([1.0, 0, 0]),
                     TableKernel(table), AffineReward(base, coef), discount)
    go_left = np.zeros((2, 2, 3))  # [t, z, s] -> pi(L | s, z)
    go_left[0, :, C] = [2 / 3, 1 / 3]
    # t=0 at L/R is off the initial support; filled with the signal-matching response
    go_left[0, :, L] = [1.0, 0.0]
    go_left[0, :, R] = [1.0, 0.0]
    go_left[1, :, L] = [1.0, 1 / 9]
    go_left[1, :, R] = [8 / 9, 0.0]
    go_left[1, :, C] = 0.5
    policy = BehavioralPolicy(np.stack([go_left, 1.0 - go_left], axis=-1))
    return EnvironmentBundle("traffic", model, policy, CorrelationDevice.uniform(model),
                             "three-city routing game with a uniform two-signal device")


def _squeeze(name, horizon, n_signals, discount):
    table = np.zeros((3, 2, 3))
    table[:, 1, :2] = [0.25, 0.75]
    table[:, 0, :2] = [0.75, 0.25]
    base, coef = _affine(3, 2)
    coef[0, :, 0] = 1.0
    coef[1, :, 1] = 1.0
    model = MfgModel(("0", "1", "2"), ("0", "1"), tuple(str(z) for z in range(n_signals)), horizon,
                     np.array([0, 0, 1.0]), TableKernel(table), AffineReward(base, coef), discount)
    device = CorrelationDevice.uniform(model)
    # signal parity picks the crowded side: soft (2/3) for z in {0, 1}, hard for z >= 2.
    # The solver certifies this pair; it is a fixed point already.
    init = np.zeros((horizon + 1, n_signals, 3, 2))
    for z in range(n_signals):
        p = 2 / 3 if z < 2 else 1.0
        init[:, z, :, z % 2] = p
        init[:, z, :, 1 - z % 2] = 1.0 - p
    policy, _ = solve_amfce_fixed_point(model, device, init=BehavioralPolicy(init))
    return EnvironmentBundle(name, model, policy, device, "crowd-seeking squeeze, solved expert")


def _rps(discount):
    base, coef = _affine(4, 3)
    R, P, S = 1, 2, 3
    coef[R, :, S], coef[R, :, P] = 2.0, -1.0
    coef[P, :, R], coef[P, :, S] = 4.0, -2.0
    coef[S, :, P], coef[S, :, R] = 2.0, -1.0
    table = np.zeros((4, 3, 4))
    for a in range(3):
        table[:, a, a + 1] = 1.0
    model = MfgModel(("C", "R", "P", "S"), ("R", "P", "S"), ("0",), 1, np.array([1.0, 0, 0, 0]),
                     TableKernel(table), AffineReward(base, coef), discount)
    device = CorrelationDevice.dirac(model)
    policy, _ = solve_amfce_fixed_point(model, device)
    return EnvironmentBundle("rps", model, policy, device, "one-shot rock-paper-scissors, solved expert")


def _flock(discount):
    vel = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    state_vel = np.vstack([vel, np.zeros(2)])
    table = np.zeros((5, 4, 5))
    for a in range(4):
        table[:, a, a] = 1.0
    model = MfgModel(("E", "N", "W", "S", "rest"), ("E", "N", "W", "S"), ("0", "1", "2", "3"), 2,
                     np.eye(5)[4], TableKernel(table), FlockReward(vel, state_vel), discount)
    device = CorrelationDevice.uniform(model)
    # uniform play is a (degenerate) equilibrium already; tilt toward E so the solver finds alignment
    init = np.full((3, 4, 5, 4), 0.2)
    init[..., 0] = 0.4
    policy, _ = solve_amfce_fixed_point(model, device, init=BehavioralPolicy(init), tol=1e-12)
    return EnvironmentBundle("flock", model, policy, device, "velocity-alignment flock, solved expert")


def _driver(discount):
    s1, s2, E, B = 0, 1, 0, 1
    table = np.zeros((2, 2, 2))
    table[s1, E, s2] = 1.0
    table[s1, B, s1] = 1.0
    table[s2, :, s2] = 1.0
    base, coef = _affine(2, 2)
    base[s1, E], coef[s1, E, s1] = 3.0, -3.0
    base[s1, B] = 0.5
    model = MfgModel(("s1", "s2"), ("E", "B"), ("0", "1"), 1, np.array([1.0, 0.0]),
                     TableKernel(table), AffineReward(base, coef), discount)
    # one table shared by both steps (the driver cannot tell them apart)
    stay = np.zeros((2, 2))  # [z, s] -> pi(B | s, z)
    stay[:, s1] = [0.5, 1.0]
    stay[:, s2] = 1.0
    shared = np.stack([1.0 - stay, stay], axis=-1)
    policy = BehavioralPolicy(np.stack([shared, shared]))
    always_b = BehavioralPolicy.deterministic(model, B)
    return EnvironmentBundle("driver", model, policy, CorrelationDevice.uniform(model),
                             "absent-minded driver with a time-shared policy",
                             alternates={"mfce": (always_b, CorrelationDevice.dirac(model))})


_LOCK = threading.Lock()
_CACHE: dict = {}


def build_env(name: str, params: dict | None = None) -> EnvironmentBundle:
    """Build a bundled environment; ``params`` may set ``discount`` in (0, 1]."""
    params = dict(params or {})
    discount = float(params.pop("discount", 1.0))
    if params:
        raise ValueError(f"unknown environment parameters: {sorted(params)}")
    builders = {
        "traffic": lambda: _traffic(discount),
        "squeeze2": lambda: _squeeze("squeeze2", 1, 2, discount),
        "squeeze3": lambda: _squeeze("squeeze3", 2, 4, discount),
        "rps": lambda: _rps(discount),
        "flock": lambda: _flock(discount),
        "driver": lambda: _driver(discount),
    }
    if name not in builders:
        raise ValueError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}")
    key = (name, discount)
    with _LOCK:
        if key not in _CACHE:
            _CACHE[key] = builders[name]()
        return _CACHE[key]
