from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dyadics
from macsim.dyadic import ONE, ZERO, Dyadic, average


def test_canonical_form():
    assert (Dyadic(4, 3).num, Dyadic(4, 3).exp) == (1, 1)
    assert (Dyadic(0, 9).num, Dyadic(0, 9).exp) == (0, 0)
    assert Dyadic(6, 1) == Dyadic(3)
    with pytest.raises(ValueError):
        Dyadic(1, -1)


def test_parse_and_render_round_trip():
    assert Dyadic.parse("3/2^4") == Fraction(3, 16)
    assert Dyadic.parse("-5") == -5
    assert Dyadic.parse("1/8") == Dyadic(1, 3)
    assert str(Dyadic(3, 4)) == "3/2^4"
    with pytest.raises(ValueError):
        Dyadic.of(Fraction(1, 3))


def test_average_of_endpoints():
    assert average(ZERO, ONE) == Fraction(1, 2)
    assert Dyadic(1, 2).decimal(3) == "0.250"


@settings(max_examples=200, deadline=None)
@given(dyadics(16, -4, 4), dyadics(16, -4, 4))
def test_arithmetic_matches_fractions(a, b):
    fa, fb = a.to_fraction(), b.to_fraction()
    assert (a + b).to_fraction() == fa + fb
    assert (a - b).to_fraction() == fa - fb
    assert (a * b).to_fraction() == fa * fb
    assert average(a, b).to_fraction() == (fa + fb) / 2
    assert (a < b) == (fa < fb)
    assert (a == b) == (fa == fb)


@settings(max_examples=100, deadline=None)
@given(dyadics(20, -8, 8), st.integers(0, 10))
def test_shift_and_hash(a, k):
    assert a.shift(k).to_fraction() == a.to_fraction() / 2**k
    assert hash(a) == hash(Dyadic.parse(str(a)))
    assert Dyadic.parse(str(a)) == a
