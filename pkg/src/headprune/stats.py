"""Mann-Whitney U tests (exact enumeration or tie-corrected normal
approximation) and polynomial least-squares curve fitting."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .ranking import PruneCurve

EXACT_LIMIT = 12


@dataclass(frozen=True)
class MwuResult:
    """Two-sided Mann-Whitney U result for the first sample.

    mode is "exact" (full enumeration of rank assignments; only when both
    samples have <= 12 values and there are no ties) or "normal" (continuity
    corrected, tie-corrected variance). degenerate marks a zero-variance
    pooled sample, where p is pinned to 1.
    """

    u: float
    n: int
    m: int
    p: float
    mode: str
    degenerate: bool = False


def _midranks(values: Sequence[float]) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = np.asarray(values, dtype=np.float64)[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _u_counts(n: int, m: int) -> list[int]:
    """counts[u] = number of rank arrangements giving U = u, for tie-free
    samples of sizes n and m; sums to C(n+m, n)."""
    prev = [[1] for _ in range(m + 1)]  # row i=0: every j has U=0 only
    for i in range(1, n + 1):
        cur = [[1]]  # j = 0
        for j in range(1, m + 1):
            counts = [0] * (i * j + 1)
            for u, c in enumerate(prev[j]):  # element of a beats all j of b
                counts[u + j] += c
            for u, c in enumerate(cur[j - 1]):
                counts[u] += c
            cur.append(counts)
        prev = cur
    return prev[m]


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> MwuResult:
    """Two-sided test that samples a and b come from one distribution.

    U is the statistic of sample a (number of (x, y) pairs with x > y,
    counting ties as half). Exact p enumerates the tie-free rank-sum
    distribution; otherwise the normal approximation applies a 0.5
    continuity correction and tie-corrected variance.
    """
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    pooled = list(a) + list(b)
    ranks = _midranks(pooled)
    r_a = float(ranks[:n].sum())
    u = r_a - n * (n + 1) / 2.0
    mean = n * m / 2.0

    tie_sizes = [c for c in Counter(pooled).values() if c > 1]
    if not tie_sizes and n <= EXACT_LIMIT and m <= EXACT_LIMIT:
        counts = _u_counts(n, m)
        total = sum(counts)
        dist = abs(u - mean)
        hits = sum(c for uu, c in enumerate(counts) if abs(uu - mean) >= dist - 1e-12)
        return MwuResult(u, n, m, hits / total, "exact")

    big_n = n + m
    tie_term = sum(t**3 - t for t in tie_sizes) / (big_n * (big_n - 1))
    var = n * m / 12.0 * ((big_n + 1) - tie_term)
    if var <= 0.0:
        return MwuResult(u, n, m, 1.0, "normal", degenerate=True)
    z = max(abs(u - mean) - 0.5, 0.0) / math.sqrt(var)
    p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return MwuResult(u, n, m, max(p, 5e-324), "normal")


def compare_curves(curve_a: PruneCurve, curve_b: PruneCurve) -> MwuResult:
    """Mann-Whitney U over the two curves' BLEU values, one per k.

    The k=0 points are excluded: both curves share the unpruned baseline
    there by construction, so including it only injects a guaranteed tie.
    """
    if curve_a.ks != curve_b.ks:
        raise ValueError(f"curves sampled on different k grids: "
                         f"{curve_a.ks} vs {curve_b.ks}")
    a = [b for k, b in curve_a.points if k != 0]
    b = [v for k, v in curve_b.points if k != 0]
    if not a:
        raise ValueError("curves have no points beyond k=0")
    return mann_whitney_u(a, b)


# ---------------------------------------------------------------------------
# polynomial regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolyFit:
    """Least-squares polynomial. coefficients ascend by power and live in
    the original x coordinates; evaluation outside [x_min, x_max] is
    refused because the fit is presentation-only interpolation."""

    degree: int
    coefficients: tuple[float, ...]
    x_range: tuple[float, float]
    rss: float

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        lo, hi = self.x_range
        span = max(hi - lo, 1.0)
        if np.any(x < lo - 1e-9 * span) or np.any(x > hi + 1e-9 * span):
            raise ValueError(f"evaluation outside fit range [{lo}, {hi}]")
        return sum(c * x**i for i, c in enumerate(self.coefficients))


def polyfit(points: Sequence[tuple[float, float]], degree: int) -> PolyFit:
    """Fit y ~ poly(x) of the given degree by least squares.

    Solved on x rescaled to [-1, 1] for conditioning, then converted back.
    Needs at least degree + 1 distinct x values.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)
    n_distinct = len(np.unique(xs))
    if n_distinct < degree + 1:
        raise ValueError(f"only {n_distinct} distinct x values for degree "
                         f"{degree}; lower the degree to <= {n_distinct - 1}")
    with warnings.catch_warnings():
        warnings.simplefilter("error", np.exceptions.RankWarning)
        try:
            fitted = Polynomial.fit(xs, ys, deg=degree)
        except np.exceptions.RankWarning:
            raise ValueError(f"rank-deficient fit at degree {degree}; "
                             f"lower the degree") from None
    coef = fitted.convert().coef
    if len(coef) < degree + 1:
        coef = np.concatenate([coef, np.zeros(degree + 1 - len(coef))])
    resid = ys - fitted(xs)
    return PolyFit(degree, tuple(float(c) for c in coef),
                   (float(xs.min()), float(xs.max())), float(resid @ resid))
