"""Divergences between discrete distributions."""
from __future__ import annotations

import numpy as np

NORMALIZATION_TOL = 1e-9


def _as_distribution(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if (p < 0).any():
        raise ValueError("histogram entries must be nonnegative")
    total = p.sum()
    if total <= 0:
        raise ValueError("histogram has no mass")
    if abs(total - 1.0) > NORMALIZATION_TOL:
        p = p / total
    return p


def _pair(p, q):
    p, q = np.ravel(p), np.ravel(q)
    if p.shape != q.shape:
        raise ValueError(f"histogram lengths differ: {p.size} vs {q.size}")
    return _as_distribution(p), _as_distribution(q)


def _kl_to_mixture(p, total):
    # KL(p || (p+q)/2) written with p + q so that subnormal entries cannot make m = 0
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(2.0 * p[mask] / total[mask])))


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits, so it lies in [0, 1]."""
    p, q = _pair(p, q)
    total = p + q
    jsd = 0.5 * _kl_to_mixture(p, total) + 0.5 * _kl_to_mixture(q, total)
    return min(max(jsd, 0.0), 1.0)


def tv_distance(p, q) -> float:
    p, q = _pair(p, q)
    return 0.5 * float(np.abs(p - q).sum())
