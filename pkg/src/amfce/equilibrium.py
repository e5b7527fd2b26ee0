"""Action values, swap deviations, equilibrium verification and solving.

Q tables are stored per time step as arrays ``q[t][k, s, a, z]`` where ``k``
indexes the signal prefix z_0..z_{t-1} (which fixes the population mean
field) and ``z`` is the current signal.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares

from .mfg_core import (
    DEFAULT_CAP,
    BehavioralPolicy,
    CorrelationDevice,
    EnumerationTooLarge,
    MeanFieldFlow,
    MfgModel,
    decode_prefix,
    encode_prefix,
    expected_return,
    mean_field_flow,
    table_of,
)

TIE_TOL = 1e-12


class NonConvergence(UserWarning):
    pass


@dataclass
class QTable:
    values: list  # q[t] with shape [|Z|^t, S, A, Z]
    flow: MeanFieldFlow

    def at(self, t: int, s: int, a: int, z: int, prefix=()) -> float:
        n_signals = self.values[t].shape[-1]
        if len(prefix) != t:
            raise ValueError(f"prefix length {len(prefix)} does not match t={t}")
        return float(self.values[t][encode_prefix(prefix, n_signals), s, a, z])


@dataclass
class VerificationReport:
    is_equilibrium: bool
    max_gain: float
    witness: dict | None
    tol: float
    iterations: int | None = None

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _backward(model: MfgModel, agent, device, flow: MeanFieldFlow, optimal: bool) -> list:
    T, Z, S = model.horizon, model.n_signals, model.n_states
    rho = table_of(device)
    pi = None if optimal else table_of(agent)
    values = [None] * (T + 1)
    cont = None
    for t in range(T, -1, -1):
        mu = flow.mu[t]
        q = np.repeat(model.reward_at(mu)[..., None], Z, axis=-1)
        if t < T:
            P = model.kernel_at(mu)
            nxt = cont.reshape(mu.shape[0], Z, S)
            q = q + model.discount * np.einsum("ksap,kzp->ksaz", P, nxt)
        values[t] = q
        if optimal:
            cont = np.einsum("z,ksz->ks", rho[t], q.max(axis=2))
        else:
            cont = np.einsum("z,zsa,ksaz->ks", rho[t], pi[t], q)
    return values


def compute_q(model: MfgModel, agent: BehavioralPolicy, population: BehavioralPolicy,
              device: CorrelationDevice, cap: int = DEFAULT_CAP) -> QTable:
    """Q of an agent following ``agent`` while the population follows ``population``."""
    for obj in (agent, population, device):
        obj.check(model)
    flow = mean_field_flow(model, population, device, cap)
    return QTable(_backward(model, agent, device, flow, optimal=False), flow)


def compute_q_star(model: MfgModel, population: BehavioralPolicy, device: CorrelationDevice,
                   cap: int = DEFAULT_CAP) -> QTable:
    """Optimal Q with the max over next actions taken after observing (z', s')."""
    population.check(model)
    device.check(model)
    flow = mean_field_flow(model, population, device, cap)
    return QTable(_backward(model, None, device, flow, optimal=True), flow)


def deviation_gain(q: QTable, rho_t, pi_t, s: int, z_prefix, u) -> float:
    """Expected gain of playing u(a) whenever a is recommended at state s."""
    t = len(z_prefix)
    vals = q.values[t]
    n_signals = vals.shape[-1]
    u = np.asarray(u, dtype=int)
    if u.shape != (vals.shape[2],) or u.min() < 0 or u.max() >= vals.shape[2]:
        raise ValueError("swap function must map every action to a valid action")
    if np.asarray(pi_t).shape[0] != n_signals or np.asarray(rho_t).shape != (n_signals,):
        raise ValueError("signal dimension mismatch")
    qk = vals[encode_prefix(z_prefix, n_signals), s]  # [a, z]
    diff = qk[u] - qk
    w = np.asarray(rho_t)[:, None] * np.asarray(pi_t)[:, s, :]  # [z, a]
    return float(np.sum(w.T * diff))


def reachable_states(model: MfgModel, flow: MeanFieldFlow) -> list:
    """States some action sequence can reach, per (t, prefix)."""
    reach = [(model.mu0 > 0)[None, :]]
    for t in range(model.horizon):
        P = model.kernel_at(flow.mu[t]) > 0
        nxt = np.einsum("ks,ksap->kp", reach[-1].astype(float), P.astype(float)) > 0
        reach.append(np.repeat(nxt, model.n_signals, axis=0))
    return reach


def swap_gain_table(q_t: np.ndarray, pi_t: np.ndarray, rho_t: np.ndarray) -> np.ndarray:
    """G[k, s, a, a'] = E_z[rho(z) pi(a|s,z) (Q(s,a',z) - Q(s,a,z))]."""
    w = rho_t[:, None, None] * pi_t  # [z, s, a]
    diff = q_t[:, :, None, :, :] - q_t[:, :, :, None, :]  # [k, s, a, a', z]
    return np.einsum("zsa,ksabz->ksab", w, diff)


def _scan_gains(model, q: QTable, pi, rho):
    reach = reachable_states(model, q.flow)
    best = (-np.inf, None)
    for t in range(model.horizon + 1):
        G = swap_gain_table(q.values[t], pi[t], rho[t])
        total = G.max(axis=-1).sum(axis=-1)  # best swap per (k, s)
        mask = (q.flow.prob[t] > 0)[:, None] & reach[t]
        if not mask.any():
            continue
        total = np.where(mask, total, -np.inf)
        k, s = np.unravel_index(int(np.argmax(total)), total.shape)
        if total[k, s] > best[0]:
            a, b = np.unravel_index(int(np.argmax(G[k, s])), G[k, s].shape)
            witness = {
                "t": t,
                "s": int(s),
                "prefix": list(decode_prefix(int(k), t, model.n_signals)),
                "a": int(a),
                "a_dev": int(b),
            }
            best = (float(total[k, s]), witness)
    return best


def verify_amfce(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice,
                 tol: float = 1e-9, cap: int = DEFAULT_CAP) -> VerificationReport:
    """Check every swap deviation at every (t, prefix, reachable state).

    ``max_gain`` is the gain of the best swap function, which decomposes
    into an independent best deviation per recommended action.
    """
    q = compute_q(model, policy, policy, device, cap)
    gain, witness = _scan_gains(model, q, policy.table, device.table)
    return VerificationReport(bool(gain <= tol), gain, witness, tol)


def _argmax_low(score: np.ndarray) -> np.ndarray:
    top = score.max(axis=-1, keepdims=True)
    near = score >= top - TIE_TOL * (1.0 + np.abs(top))
    return np.argmax(near, axis=-1)


def best_response(model: MfgModel, population: BehavioralPolicy, device: CorrelationDevice,
                  cap: int = DEFAULT_CAP) -> BehavioralPolicy:
    """Deterministic greedy response built forward in time.

    At each (t, z, s) the action maximizes Q* averaged over the prefixes the
    responding agent itself can be in, weighted by its own occupancy under
    the response built so far. Ties go to the lowest action index.
    """
    qs = compute_q_star(model, population, device, cap)
    T, Z, S, A = model.horizon, model.n_signals, model.n_states, model.n_actions
    out = np.zeros((T + 1, Z, S, A))
    x = model.mu0[None, :]
    for t in range(T + 1):
        prob = qs.flow.prob[t]
        w = prob[:, None] * x
        # unreachable states fall back to prefix weights alone
        w = np.where(w.sum(axis=0, keepdims=True) > 0, w, prob[:, None])
        score = np.einsum("ks,ksaz->zsa", w, qs.values[t])
        best = _argmax_low(score)
        np.put_along_axis(out[t], best[..., None], 1.0, axis=-1)
        if t < T:
            P = model.kernel_at(qs.flow.mu[t])
            x = np.einsum("ks,zsa,ksap->kzp", x, out[t], P).reshape(-1, S)
    return BehavioralPolicy(out)


def _polish(model, policy: BehavioralPolicy, device, tol, cap, support_tol=1e-3):
    """Refine a mixed iterate by solving the indifference conditions on its support."""
    tab, rho = policy.table, device.table
    flow = mean_field_flow(model, policy, device, cap)
    reach = reachable_states(model, flow)
    rows = []
    for t in range(model.horizon + 1):
        live = reach[t][flow.prob[t] > 0].any(axis=0)
        for z in np.flatnonzero(rho[t] > 0):
            for s in np.flatnonzero(live):
                supp = np.flatnonzero(tab[t, z, s] > support_tol)
                if len(supp) >= 2:
                    rows.append((t, int(z), int(s), supp))
    if not rows:
        return None
    pairs = {}
    for t, _, s, supp in rows:
        pairs.setdefault((t, s), set()).update(supp.tolist())

    def unpack(x):
        new = tab.copy()
        i = 0
        for t, z, s, supp in rows:
            new[t, z, s] = 0.0
            new[t, z, s, supp] = x[i:i + len(supp)]
            i += len(supp)
        return new

    def residuals(x):
        pi = unpack(x)
        fl = mean_field_flow(model, pi, rho, cap)
        vals = _backward(model, pi, rho, fl, optimal=False)
        res = [pi[t, z, s].sum() - 1.0 for t, z, s, _ in rows]
        for (t, s), acts in sorted(pairs.items()):
            acts = sorted(acts)
            G = swap_gain_table(vals[t], pi[t], rho[t])
            ks = np.flatnonzero((fl.prob[t] > 0) & reach[t][:, s])
            for a in acts:
                for b in acts:
                    if a != b:
                        res.extend(G[ks, s, a, b])
        return np.array(res)

    x0 = np.concatenate([tab[t, z, s, supp] for t, z, s, supp in rows])
    sol = least_squares(residuals, x0, bounds=(0.0, 1.0), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    new = np.clip(unpack(sol.x), 0.0, None)
    new /= new.sum(axis=-1, keepdims=True)
    cand = BehavioralPolicy(new)
    return cand, verify_amfce(model, cand, device, tol, cap)


def solve_amfce_fixed_point(model: MfgModel, device: CorrelationDevice, init: BehavioralPolicy | None = None,
                            max_iters: int = 500, damping: float = 0.1, tol: float = 1e-6,
                            log_path=None, polish: bool = True, cap: int = DEFAULT_CAP):
    """Damped best-response iteration pi <- (1 - alpha) pi + alpha BR(pi).

    Returns the first verified iterate, or the best one by max_gain. When the
    loop ends unverified, a least-squares pass on the support's indifference
    conditions is tried (mixed equilibria are not reached by constant damping).
    """
    device.check(model)
    pi = BehavioralPolicy.uniform(model) if init is None else init
    pi.check(model)
    log = []
    best = None
    for k in range(max_iters + 1):
        rep = verify_amfce(model, pi, device, tol, cap)
        rep.iterations = k
        log.append((k, rep.max_gain))
        if best is None or rep.max_gain < best[1].max_gain:
            best = (pi, rep)
        if rep.is_equilibrium or k == max_iters:
            break
        br = best_response(model, pi, device, cap)
        pi = BehavioralPolicy((1.0 - damping) * pi.table + damping * br.table)
    pi, rep = best
    if not rep.is_equilibrium and polish:
        out = _polish(model, pi, device, tol, cap)
        if out is not None and out[1].max_gain < rep.max_gain:
            pi, rep = out[0], out[1]
            rep.iterations = len(log) - 1
            log.append((len(log), rep.max_gain))
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "max_gain"])
            writer.writerows((k, repr(g)) for k, g in log)
    if not rep.is_equilibrium:
        warnings.warn(f"fixed point not reached: max_gain {rep.max_gain:.3g} > tol {tol:g}", NonConvergence,
                      stacklevel=2)
    return pi, rep


def embed_mfne(policy_mfne, n_signals: int) -> tuple[BehavioralPolicy, CorrelationDevice]:
    """Copy a signal-free policy to every signal and put all device mass on signal 0."""
    tab = np.asarray(table_of(policy_mfne), dtype=float)
    if tab.ndim == 4:
        if tab.shape[1] != 1:
            raise ValueError("signal-free policy must have a single signal slot")
        tab = tab[:, 0]
    full = np.repeat(tab[:, None], n_signals, axis=1)
    dev = np.zeros((tab.shape[0], n_signals))
    dev[:, 0] = 1.0
    return BehavioralPolicy(full), CorrelationDevice(dev)


# ---------------------------------------------------------------- CIP


def _open_loop_values(model: MfgModel, flow: MeanFieldFlow, seq=None) -> np.ndarray:
    """Expected return of forced action sequences, indexed base-|A| (first action most significant)."""
    T, Z, S = model.horizon, model.n_signals, model.n_states
    x = model.mu0[None, None, :]  # [seq, prefix, s]
    vals = np.zeros(1)
    for t in range(T + 1):
        acts = np.arange(model.n_actions) if seq is None else np.array([seq[t]])
        r = model.reward_at(flow.mu[t])[:, :, acts]
        step = np.einsum("k,nks,ksa->na", flow.prob[t], x, r)
        vals = (vals[:, None] + model.discount**t * step).ravel()
        if t < T:
            P = model.kernel_at(flow.mu[t])[:, :, acts]
            x = np.einsum("nks,ksap->nakp", x, P)
            x = np.repeat(x.reshape(-1, x.shape[2], S), Z, axis=1)
    return vals


def compute_cip(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice, a_seq,
                cap: int = DEFAULT_CAP) -> float:
    """Return of a forced action sequence minus the policy's own return."""
    if len(a_seq) != model.horizon + 1:
        raise ValueError(f"action sequence needs length {model.horizon + 1}")
    if min(a_seq) < 0 or max(a_seq) >= model.n_actions:
        raise ValueError("action index out of range")
    flow = mean_field_flow(model, policy, device, cap)
    own = expected_return(model, policy, policy, device, cap)
    return float(_open_loop_values(model, flow, a_seq)[0] - own)


def max_cip(model: MfgModel, policy: BehavioralPolicy, device: CorrelationDevice,
            cap: int = DEFAULT_CAP) -> tuple[float, tuple[int, ...]]:
    n_seq = model.n_actions ** (model.horizon + 1)
    if n_seq > cap:
        raise EnumerationTooLarge(f"|A|^(T+1) = {n_seq} exceeds cap {cap}")
    policy.check(model)
    device.check(model)
    flow = mean_field_flow(model, policy, device, cap)
    own = expected_return(model, policy, policy, device, cap)
    vals = _open_loop_values(model, flow) - own
    i = int(np.argmax(vals))
    return float(vals[i]), decode_prefix(i, model.horizon + 1, model.n_actions)


def verify_dual_identity(model: MfgModel, policy: BehavioralPolicy, policy_star: BehavioralPolicy,
                         device: CorrelationDevice, cap: int = DEFAULT_CAP) -> tuple[float, float]:
    """Both sides of the Lagrangian identity for the multiplier generated by ``policy_star``.

    lhs enumerates every (z, s, a) trajectory of an agent on ``policy_star``
    facing a population on ``policy``, groups them by their (z, a) sequence and
    sums P(z, a) * CIP(z, a), where the CIP conditions on that sequence.
    rhs = J(policy_star, policy) - J(policy, policy).
    """
    for obj in (policy, policy_star, device):
        obj.check(model)
    T, Z, S, A = model.horizon, model.n_signals, model.n_states, model.n_actions
    if (Z * S * A) ** (T + 1) > cap:
        raise EnumerationTooLarge("trajectory enumeration exceeds cap")
    flow = mean_field_flow(model, policy, device, cap)
    pi, rho = policy_star.table, device.table
    s = np.flatnonzero(model.mu0 > 0)
    w, g = model.mu0[s], np.zeros(len(s))
    k = np.zeros(len(s), dtype=np.int64)
    code = np.zeros(len(s), dtype=np.int64)
    for t in range(T + 1):
        r = model.reward_at(flow.mu[t])
        n = len(s)
        zz = np.repeat(np.arange(Z), A)
        aa = np.tile(np.arange(A), Z)
        s_e = np.repeat(s, Z * A)
        k_e = np.repeat(k, Z * A)
        z_e, a_e = np.tile(zz, n), np.tile(aa, n)
        w = np.repeat(w, Z * A) * rho[t][z_e] * pi[t][z_e, s_e, a_e]
        g = np.repeat(g, Z * A) + model.discount**t * r[k_e, s_e, a_e]
        code = (np.repeat(code, Z * A) * Z + z_e) * A + a_e
        k = k_e * Z + z_e
        s = s_e
        keep = w > 0
        w, g, code, k, s, a_e = w[keep], g[keep], code[keep], k[keep], s[keep], a_e[keep]
        if t < T:
            P = model.kernel_at(flow.mu[t])
            n = len(s)
            sp = np.tile(np.arange(S), n)
            w = np.repeat(w, S) * P[np.repeat(k_e[keep], S), np.repeat(s, S), np.repeat(a_e, S), sp]
            g, code, k = np.repeat(g, S), np.repeat(code, S), np.repeat(k, S)
            s = sp
            keep = w > 0
            w, g, code, k, s = w[keep], g[keep], code[keep], k[keep], s[keep]
    own = expected_return(model, policy, policy, device, cap)
    groups, inv = np.unique(code, return_inverse=True)
    mass = np.bincount(inv, weights=w, minlength=len(groups))
    cond = np.bincount(inv, weights=w * g, minlength=len(groups)) / mass
    lhs = float(np.sum(mass * (cond - own)))
    rhs = expected_return(model, policy_star, policy, device, cap) - own
    return lhs, float(rhs)
