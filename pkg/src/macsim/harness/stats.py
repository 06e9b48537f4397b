"""Small statistics helpers for Monte-Carlo verdicts."""

from __future__ import annotations

import math
from statistics import NormalDist, median
from typing import Sequence


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    phat = successes / trials
    z2n = z * z / trials
    centre = (phat + z2n / 2) / (1 + z2n)
    half = z * math.sqrt(phat * (1 - phat) / trials + z2n / (4 * trials)) / (1 + z2n)
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


def fit_scaling(ns: Sequence[float], means: Sequence[float]) -> float:
    """Least-squares slope of log(mean) against log(n)."""
    if len(ns) != len(means):
        raise ValueError("ns and means differ in length")
    if len(ns) < 3:
        raise ValueError("need at least three points")
    if any(x <= 0 for x in ns) or any(y <= 0 for y in means):
        raise ValueError("sizes and means must be positive")
    xs = [math.log(x) for x in ns]
    ys = [math.log(y) for y in means]
    mx = sum(xs) / len(xs)
    my = sum(ys) / len(ys)
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        raise ValueError("all sizes are equal")
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx


def summarize(values: Sequence[float]) -> dict:
    """Mean, median and 95th percentile (nearest rank)."""
    if not values:
        return {"mean": None, "median": None, "p95": None}
    s = sorted(values)
    rank = max(1, math.ceil(0.95 * len(s)))
    return {"mean": sum(s) / len(s), "median": median(s), "p95": s[rank - 1]}
