"""Detection probabilities for multi-sample monitoring designs.

A tag with ``X`` users in a population of ``N`` is "seen" by one random sample
of ``S`` users when at least ``x_s`` of its users fall in the sample; across
``n_s`` independent samples it is detected when at least ``s`` of them see it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import hypergeom

EXACT_LIMIT = 60


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionDesign:
    N: int
    S: int
    x_s: int
    n_s: int
    s: int

    def __post_init__(self):
        if not 0 < self.S <= self.N:
            raise DesignError(f"need 0 < S <= N, got S={self.S}, N={self.N}")
        if not 1 <= self.x_s <= self.S:
            raise DesignError(f"need 1 <= x_s <= S, got x_s={self.x_s}")
        if not 1 <= self.s <= self.n_s:
            raise DesignError(f"need 1 <= s <= n_s, got s={self.s}, n_s={self.n_s}")


def _check(N: int, X: int, S: int) -> None:
    if N < 0 or not 0 <= X <= N or not 0 <= S <= N:
        raise DesignError(f"invalid hypergeometric parameters N={N}, X={X}, S={S}")


def hypergeom_pmf(k: int, N: int, X: int, S: int) -> float:
    """Probability of exactly ``k`` of the ``X`` marked items in a draw of ``S`` from ``N``."""
    _check(N, X, S)
    if k < max(0, S + X - N) or k > min(X, S):
        return 0.0
    if N <= EXACT_LIMIT:
        return math.comb(X, k) * math.comb(N - X, S - k) / math.comb(N, S)
    return float(hypergeom.pmf(k, N, X, S))


def prob_at_most(x: int, N: int, X: int, S: int) -> float:
    _check(N, X, S)
    lo = max(0, S + X - N)
    return min(1.0, math.fsum(hypergeom_pmf(k, N, X, S) for k in range(lo, min(x, X, S) + 1)))


def prob_at_least(x_s: int, N: int, X: int, S: int) -> float:
    """Probability that a sample of ``S`` contains at least ``x_s`` of the ``X`` users."""
    _check(N, X, S)
    if x_s <= 0:
        return 1.0
    if x_s > min(X, S):
        return 0.0
    if N > EXACT_LIMIT:
        return min(1.0, max(0.0, float(hypergeom.sf(x_s - 1, N, X, S))))
    lo = max(0, S + X - N)
    hi = min(X, S)
    # sum whichever tail is shorter to limit cancellation
    if hi - x_s + 1 <= x_s - lo:
        return min(1.0, math.fsum(hypergeom_pmf(k, N, X, S) for k in range(x_s, hi + 1)))
    return max(0.0, 1.0 - math.fsum(hypergeom_pmf(k, N, X, S) for k in range(lo, x_s)))


def multi_sample_prob(p_alpha: float, n_s: int, s: int) -> float:
    """Probability that at least ``s`` of ``n_s`` independent samples detect, each with probability ``p_alpha``."""
    if not 0.0 <= p_alpha <= 1.0:
        raise DesignError(f"p_alpha must lie in [0, 1], got {p_alpha}")
    if not 1 <= s <= n_s:
        raise DesignError(f"need 1 <= s <= n_s, got s={s}, n_s={n_s}")
    return min(1.0, math.fsum(math.comb(n_s, i) * p_alpha ** i * (1.0 - p_alpha) ** (n_s - i)
                              for i in range(s, n_s + 1)))


def detection_probability(design: DetectionDesign, X: int) -> float:
    return multi_sample_prob(prob_at_least(design.x_s, design.N, X, design.S), design.n_s, design.s)


def detection_curve(design: DetectionDesign, X_grid) -> list[tuple[int, float]]:
    """Detection probability at each candidate tag population size."""
    out = []
    for X in X_grid:
        X = int(X)
        if not 0 <= X <= design.N:
            raise DesignError(f"X={X} outside [0, {design.N}]")
        out.append((X, detection_probability(design, X)))
    return out


def detection_curve_csv(curve, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("X_alpha,probability\n")
        for X, p in curve:
            fh.write(f"{X},{p:.17g}\n")


def smallest_detectable(design: DetectionDesign, target: float = 0.5, X_max: int | None = None) -> int | None:
    """Smallest tag population with detection probability at least ``target`` (bisection)."""
    hi = design.N if X_max is None else X_max
    if detection_probability(design, hi) < target:
        return None
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if detection_probability(design, mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def grid(start: int, stop: int, num: int = 50, log: bool = True) -> np.ndarray:
    pts = np.geomspace(max(1, start), stop, num) if log else np.linspace(start, stop, num)
    return np.unique(np.round(pts).astype(np.int64))
