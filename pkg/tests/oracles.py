"""Independent reference implementations used to derive expected test values.

Everything here is deliberately naive (loops, dense grids, exact rationals,
exhaustive search) and shares no code with the library paths it checks.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop matrix multiply."""
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for l in range(k):
                acc += a[i, l] * b[l, j]
            out[i, j] = acc
    return out


def kl_quadrature(mu: float, variance: float, n_points: int = 400_000) -> float:
    """Dense-grid trapezoid quadrature of KL(N(mu, variance) || N(0, 1))."""
    sigma = np.sqrt(variance)
    lo = min(mu - 14.0 * sigma, -14.0)
    hi = max(mu + 14.0 * sigma, 14.0)
    x = np.linspace(lo, hi, n_points)
    log_q = -0.5 * ((x - mu) ** 2 / variance) - 0.5 * np.log(2.0 * np.pi * variance)
    log_p = -0.5 * x**2 - 0.5 * np.log(2.0 * np.pi)
    integrand = np.exp(log_q) * (log_q - log_p)
    return float(np.trapezoid(integrand, x)) if hasattr(np, "trapezoid") else float(np.trapz(integrand, x))


def central_difference_gradient(f, array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f with respect to every array entry.

    Mutates entries in place around their original value; restores them after.
    """
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + step
        up = f()
        array[idx] = orig - step
        down = f()
        array[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
        it.iternext()
    return grad


def fraction_mean(vectors: list[list[int]]) -> list[Fraction]:
    """Exact rational mean of integer vectors."""
    n = len(vectors)
    dim = len(vectors[0])
    return [sum(Fraction(v[d]) for v in vectors) / n for d in range(dim)]


def pairwise_index_overlaps(index_sets: dict[str, np.ndarray]) -> list[tuple[str, str, int]]:
    """Brute-force pairwise intersection scan over named index sets."""
    overlaps = []
    names = list(index_sets)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            set_b = set(int(x) for x in index_sets[b])
            for value in index_sets[a]:
                if int(value) in set_b:
                    overlaps.append((a, b, int(value)))
    return overlaps


def find_separating_direction(
    x: np.ndarray, y: np.ndarray, n_directions: int = 2000, seed: int = 0
) -> tuple[np.ndarray, float] | None:
    """Brute-force search for a direction separating two labeled point sets.

    Returns (direction, margin) for the best linearly separating projection
    found, or None when no sampled direction separates the classes.
    """
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_directions):
        w = rng.standard_normal(x.shape[1])
        w /= np.linalg.norm(w)
        proj = x @ w
        lo_pos, hi_neg = proj[y == 1].min(), proj[y == 0].max()
        margin = lo_pos - hi_neg
        if margin <= 0:
            proj = -proj
            lo_pos, hi_neg = proj[y == 1].min(), proj[y == 0].max()
            margin = lo_pos - hi_neg
            w = -w
        if margin > 0 and (best is None or margin > best[1]):
            best = (w, float(margin))
    return best
