"""Divergences, correlation and the two-sample Kolmogorov-Smirnov test."""
from __future__ import annotations

import math

import numpy as np

__all__ = ["to_distribution", "kl_divergence", "pearson", "ks_two_sample", "kolmogorov_sf"]


def to_distribution(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("to_distribution needs finite nonnegative values")
    total = v.sum()
    if not total > 0:
        raise ValueError("to_distribution needs at least one positive entry")
    return v / total


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats, with 0 * log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions have different lengths")
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError("q is zero where p is positive; KL(p || q) is infinite")
    ps = p[support]
    return max(float(np.sum(ps * np.log(ps / q[support]))), 0.0)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("pearson needs two 1-d vectors of equal length >= 2")
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(da @ da))
    sb = math.sqrt(float(db @ db))
    if sa == 0 or sb == 0:
        raise ValueError("pearson is undefined for a constant vector")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def kolmogorov_sf(x: float) -> float:
    """P(K > x) for the limiting Kolmogorov distribution."""
    if x <= 0:
        return 1.0
    if x < 1.18:
        # Jacobi theta form converges fast for small x
        y = math.exp(-math.pi ** 2 / (8.0 * x * x))
        cdf = math.sqrt(2.0 * math.pi) / x * sum(y ** ((2 * j - 1) ** 2) for j in range(1, 8))
        return min(1.0, max(0.0, 1.0 - cdf))
    s = sum((-1) ** (j - 1) * math.exp(-2.0 * j * j * x * x) for j in range(1, 101))
    return min(1.0, max(0.0, 2.0 * s))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value.

    The p-value uses the Kolmogorov limit with effective size
    ``n*m / (n + m)``.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_two_sample needs two nonempty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    ne = a.size * b.size / (a.size + b.size)
    return d, kolmogorov_sf(math.sqrt(ne) * d)
