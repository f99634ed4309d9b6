"""Independent oracles: Monte Carlo areas, exhaustive assignment, finite differences.

Nothing here imports the kernels it is used to check; only the shared value
types. The enclosing-circle construction is re-derived locally for the same
reason.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidCircle, NonFiniteFunction, TooLarge
from .types import Assignment, Circle

_MC_CHUNK = 1_000_000
_MASK64 = (1 << 64) - 1

# Relative tolerance under which two assignment totals count as tied.
TIE_RTOL = 1e-12


def splitmix64(seed: int, index: int = 0) -> int:
    """Derive an independent 64-bit seed for trial ``index`` of a base seed."""
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _check(c: Circle) -> None:
    if not all(math.isfinite(v) for v in (c.x, c.y, c.r)) or c.r <= 0:
        raise InvalidCircle(f"invalid circle {c}")


def _pair_box(a: Circle, b: Circle) -> tuple[float, float, float, float]:
    x0 = min(a.x - a.r, b.x - b.r)
    x1 = max(a.x + a.r, b.x + b.r)
    y0 = min(a.y - a.r, b.y - b.r)
    y1 = max(a.y + a.r, b.y + b.r)
    return x0, x1, y0, y1


def _hit_counts(a: Circle, b: Circle, n: int, seed: int) -> tuple[int, int, float]:
    """Counts of samples inside both / either disk, and the box area."""
    x0, x1, y0, y1 = _pair_box(a, b)
    rng = np.random.default_rng(seed)
    both = either = 0
    remaining = n
    while remaining > 0:
        m = min(remaining, _MC_CHUNK)
        px = rng.uniform(x0, x1, m)
        py = rng.uniform(y0, y1, m)
        in_a = (px - a.x) ** 2 + (py - a.y) ** 2 <= a.r * a.r
        in_b = (px - b.x) ** 2 + (py - b.y) ** 2 <= b.r * b.r
        both += int(np.count_nonzero(in_a & in_b))
        either += int(np.count_nonzero(in_a | in_b))
        remaining -= m
    return both, either, (x1 - x0) * (y1 - y0)


def mc_intersection_area(a: Circle, b: Circle, n: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of the lens area and its standard error."""
    _check(a)
    _check(b)
    if n < 1000:
        raise ValueError("need at least 1000 samples")
    both, _, box = _hit_counts(a, b, n, seed)
    p = both / n
    return box * p, box * math.sqrt(p * (1.0 - p) / n)


def _enclosing_radius(a: Circle, b: Circle) -> float:
    d = math.hypot(b.x - a.x, b.y - a.y)
    return max(a.r, b.r, 0.5 * (d + a.r + b.r))


def mc_gciou(a: Circle, b: Circle, n: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Monte Carlo gCIoU with a delta-method standard error.

    Intersection and union come from the same samples; the enclosing circle
    area is exact.
    """
    _check(a)
    _check(b)
    if n < 1000:
        raise ValueError("need at least 1000 samples")
    both, either, box = _hit_counts(a, b, n, seed)
    p_i, p_u = both / n, either / n
    hull = math.pi * _enclosing_radius(a, b) ** 2
    value = p_i / p_u - 1.0 + box * p_u / hull
    # g(p_i, p_u) = p_i/p_u - 1 + box*p_u/hull ; hits in both imply hits in either
    g_i = 1.0 / p_u
    g_u = -p_i / p_u**2 + box / hull
    var_i = p_i * (1.0 - p_i) / n
    var_u = p_u * (1.0 - p_u) / n
    cov = p_i * (1.0 - p_u) / n
    var = g_i * g_i * var_i + g_u * g_u * var_u + 2.0 * g_i * g_u * cov
    return value, math.sqrt(max(var, 0.0))


def brute_force_assignment(cost) -> Assignment:
    """Exhaustive minimum-cost assignment of every row to a distinct column.

    Among totals within ``TIE_RTOL`` of the optimum, returns the pairing
    whose column sequence (rows in order) is lexicographically smallest.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a matrix")
    rows, cols = cost.shape
    if rows > 8:
        raise TooLarge(f"{rows} rows exceeds the exhaustive limit of 8")
    if rows > cols:
        raise ValueError("more rows than columns")
    if rows == 0:
        return Assignment(())
    perms = np.array(list(itertools.permutations(range(cols), rows)), dtype=np.int64)
    totals = np.zeros(len(perms))
    for i in range(rows):
        totals += cost[i, perms[:, i]]
    best = totals.min()
    tol = TIE_RTOL * max(1.0, abs(best))
    # permutations() yields lexicographic order, so the first near-optimum wins
    k = int(np.flatnonzero(totals <= best + tol)[0])
    return Assignment(tuple((i, int(perms[k, i])) for i in range(rows)))


def finite_diff_grad(fn: Callable[[np.ndarray], float], point: Sequence[float], h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of ``k`` reals."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(point, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        hi, lo = fn(x + e), fn(x - e)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NonFiniteFunction(f"non-finite value near coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * h)
    return grad
