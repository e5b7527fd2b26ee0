"""Truncated path signatures of piecewise-linear paths.

Levels 1..n are stored flat and concatenated (the constant level-0 term is
dropped). Each linear segment contributes the tensor exponential of its
increment, and segments are glued with Chen's identity.
"""
from __future__ import annotations

from math import factorial

import numpy as np


def signature_dimension(d: int, depth: int) -> int:
    return sum(d**k for k in range(1, depth + 1))


def split_levels(sig: np.ndarray, d: int, depth: int) -> list[np.ndarray]:
    out, i = [], 0
    for k in range(1, depth + 1):
        out.append(sig[i:i + d**k])
        i += d**k
    return out


def segment_signature(increment: np.ndarray, depth: int) -> list[np.ndarray]:
    """Levels of exp(increment) truncated at ``depth``."""
    levels = [increment.copy()]
    for k in range(2, depth + 1):
        levels.append(np.multiply.outer(levels[-1], increment).ravel() / k)
    return levels


def chen_product(left: list[np.ndarray], right: list[np.ndarray]) -> list[np.ndarray]:
    """Truncated tensor product of two group-like elements (level 0 equal to 1)."""
    depth = len(left)
    out = []
    for k in range(1, depth + 1):
        acc = left[k - 1] + right[k - 1]
        for i in range(1, k):
            acc = acc + np.multiply.outer(left[i - 1], right[k - i - 1]).ravel()
        out.append(acc)
    return out


def path_signature(points, depth: int) -> np.ndarray:
    """Signature of the piecewise-linear path through ``points`` (shape [N, d] or [N])."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("need a non-empty sequence of points")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    d = pts.shape[1]
    sig = [np.zeros(d**k) for k in range(1, depth + 1)]
    for inc in np.diff(pts, axis=0):
        if np.any(inc):
            sig = chen_product(sig, segment_signature(inc, depth))
    return np.concatenate(sig)


def embed_signal_history(z_prefix, n_signals: int, depth: int = 3) -> np.ndarray:
    """One-hot lift of a signal sequence, started from a zero basepoint."""
    z = np.asarray(z_prefix, dtype=int).ravel()
    if z.size and (z.min() < 0 or z.max() >= n_signals):
        raise IndexError("signal index out of range")
    if z.size == 0:
        return np.zeros(signature_dimension(n_signals, depth))
    pts = np.vstack([np.zeros(n_signals), np.eye(n_signals)[z]])
    return path_signature(pts, depth)


def factorial_bound(length: float, k: int) -> float:
    return length**k / factorial(k)
