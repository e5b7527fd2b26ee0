"""Slow, loop-based reference implementations used only by the tests."""
import itertools

import numpy as np


def mean_field_step(model, mu, pi_t, z):
    S = model.n_states
    P = model.kernel_at(np.asarray(mu))
    out = [0.0] * S
    for s in range(S):
        for a in range(model.n_actions):
            for sp in range(S):
                out[sp] += mu[s] * pi_t[z][s][a] * P[s][a][sp]
    return np.array(out)


def population_mean_field(model, population, prefix):
    mu = np.array(model.mu0, dtype=float)
    for t, z in enumerate(prefix):
        mu = mean_field_step(model, mu, population.table[t], z)
    return mu


def path_sum_return(model, agent, population, device):
    """Sum over every (z, s, a) path of its probability times its discounted reward."""
    T = model.horizon
    total = 0.0

    def rec(t, prefix, s, weight, acc):
        nonlocal total
        mu = population_mean_field(model, population, prefix)
        r = model.reward_at(mu)
        P = model.kernel_at(mu)
        for z in range(model.n_signals):
            for a in range(model.n_actions):
                w = weight * device.table[t][z] * agent.table[t][z][s][a]
                if w == 0:
                    continue
                g = acc + model.discount**t * r[s][a]
                if t == T:
                    total += w * g
                else:
                    for sp in range(model.n_states):
                        if P[s][a][sp] > 0:
                            rec(t + 1, prefix + (z,), sp, w * P[s][a][sp], g)

    for s in range(model.n_states):
        if model.mu0[s] > 0:
            rec(0, (), s, model.mu0[s], 0.0)
    return total


def path_sum_q(model, agent, population, device, t, prefix, s, a, z, optimal=False):
    """Q by explicit recursion over successor states, signals and actions."""
    mu = population_mean_field(model, population, prefix)
    val = model.reward_at(mu)[s][a]
    if t == model.horizon:
        return val
    P = model.kernel_at(mu)
    cont = 0.0
    for sp in range(model.n_states):
        if P[s][a][sp] == 0:
            continue
        for zp in range(model.n_signals):
            nxt = [path_sum_q(model, agent, population, device, t + 1, prefix + (z,), sp, ap, zp, optimal)
                   for ap in range(model.n_actions)]
            if optimal:
                inner = max(nxt)
            else:
                inner = sum(agent.table[t + 1][zp][sp][ap] * nxt[ap] for ap in range(model.n_actions))
            cont += P[s][a][sp] * device.table[t + 1][zp] * inner
    return val + model.discount * cont


def resample(points, subdiv=2000):
    """Uniform grid of ``subdiv`` points per segment along the piecewise-linear path."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    u = np.linspace(0, 1, subdiv + 1)[1:, None]
    segs = [p + u * (q - p) for p, q in zip(pts[:-1], pts[1:])]
    return np.vstack([pts[:1]] + segs)


def iterated_integral(grid, word):
    """Nested trapezoid quadrature: each level is a cumulative sum against the next coordinate."""
    inner = np.ones(len(grid))
    for letter in word:
        dx = np.diff(grid[:, letter])
        inner = np.concatenate([[0.0], np.cumsum(0.5 * (inner[1:] + inner[:-1]) * dx)])
    return inner[-1]


def signature_by_quadrature(points, depth, subdiv=2000):
    grid = resample(points, subdiv)
    d = grid.shape[1]
    return np.array([iterated_integral(grid, word)
                     for k in range(1, depth + 1) for word in itertools.product(range(d), repeat=k)])


def rps_indifference():
    """Population mix (R, P, S) and common reward v from the indifference system."""
    # rewards at R, P, S: 2x_S - x_P, 4x_R - 2x_S, 2x_P - x_R ; all equal v ; mix sums to 1
    M = np.array([
        [0.0, -1.0, 2.0, -1.0],
        [4.0, 0.0, -2.0, -1.0],
        [-1.0, 2.0, 0.0, -1.0],
        [1.0, 1.0, 1.0, 0.0],
    ])
    sol = np.linalg.solve(M, np.array([0.0, 0.0, 0.0, 1.0]))
    return sol[:3], sol[3]
