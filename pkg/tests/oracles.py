"""Independent reference computations.

Nothing here imports the package under test. Each function is a slow,
literal evaluation of a definition so it can be checked against the fast
implementation.
"""

from __future__ import annotations

import math
from fractions import Fraction


def binom_cdf_exact(k: int, n: int, p: float) -> float:
    """P(Bin(n, p) <= k) by summing exact rational terms."""
    if k < 0:
        return 0.0
    q = Fraction(p)
    total = sum(math.comb(n, j) * q**j * (1 - q) ** (n - j) for j in range(0, min(k, n) + 1))
    return float(total)


def kl_bernoulli(a: float, b: float) -> float:
    terms = []
    if a != 0:
        terms.append(a * (math.log(a) - math.log(b)))
    if a != 1:
        terms.append((1 - a) * (math.log1p(-a) - math.log1p(-b)))
    return math.fsum(terms)


def hb_pvalue_oracle(n: int, r_hat: float, alpha: float) -> float:
    p_h = math.exp(-n * kl_bernoulli(min(r_hat, alpha), alpha))
    k = math.ceil(round(n * r_hat, 9))
    p_b = math.e * binom_cdf_exact(k, n, alpha)
    return min(1.0, p_h, p_b)


def conformal_threshold_oracle(scores, beta):
    """k-th smallest with k = ceil((n+1)(1-beta)) in exact arithmetic; None means include-all."""
    n = len(scores)
    k = math.ceil((n + 1) * (1 - Fraction(repr(beta))))
    if k > n:
        return None
    return sorted(scores)[k - 1]


def weighted_threshold_oracle(scores, weights, test_weight, beta):
    """Scan candidate thresholds in ascending order; exact rational masses."""
    total = sum(Fraction(w) for w in weights) + Fraction(test_weight)
    for s in sorted(set(scores)):
        mass = sum(Fraction(w) for x, w in zip(scores, weights) if x <= s)
        if mass / total >= 1 - Fraction(repr(beta)):
            return s
    return None


def intervals_oracle(grid, mask):
    out, start = [], None
    for i, m in enumerate(list(mask) + [False]):
        if m and start is None:
            start = i
        elif not m and start is not None:
            out.append((grid[start], grid[i - 1]))
            start = None
    return out
