from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macsim.harness.stats import fit_scaling, summarize, wilson_interval

Z95 = 1.959963984540054


def wilson_oracle(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    p = k / n
    denom = 1 + z * z / n
    centre = p + z * z / (2 * n)
    rad = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return (centre - rad) / denom, (centre + rad) / denom


def test_wilson_examples():
    lo, hi = wilson_interval(50, 100, 0.95)
    assert lo == pytest.approx(0.404, abs=5e-4)
    assert hi == pytest.approx(1 - lo, abs=1e-12)
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == 1.0
    with pytest.raises(ValueError):
        wilson_interval(1, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5000).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_wilson_matches_closed_form(kn):
    k, n = kn
    lo, hi = wilson_interval(k, n)
    olo, ohi = wilson_oracle(k, n)
    assert lo == pytest.approx(max(0.0, olo), abs=1e-9)
    assert hi == pytest.approx(min(1.0, ohi), abs=1e-9)
    assert 0 <= lo <= k / n <= hi <= 1


def test_fit_scaling_examples():
    ns = [4, 8, 16, 32]
    assert 1.0 <= fit_scaling(ns, [n * math.log2(n) for n in ns]) <= 1.5
    assert fit_scaling(ns, [n * n for n in ns]) == pytest.approx(2.0)
    assert fit_scaling(ns, [7.0] * 4) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        fit_scaling([4, 8], [1, 2])
    with pytest.raises(ValueError):
        fit_scaling([4, 4, 4], [1, 2, 3])


def test_summarize():
    s = summarize(list(range(1, 101)))
    assert (s["mean"], s["median"], s["p95"]) == (50.5, 50.5, 95)
    assert summarize([])["mean"] is None
