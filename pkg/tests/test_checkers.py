from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dyadics
from macsim.checkers import (check_agreement, check_coherence, check_convergence, check_epsilon_agreement,
                             check_validity, first_failure)
from macsim.dyadic import Dyadic


def test_validity_examples():
    assert check_validity({0: Dyadic(1, 1)}, [0, 1])
    bad = check_validity({0: 1}, [0], binary=True)
    assert not bad and bad.witness["output"] == 1
    assert check_validity({0: 1, 1: 0}, [0, 1], binary=True)


def test_validity_uses_honest_inputs_only():
    # a value inside the overall range but outside the honest range fails
    honest = [Dyadic(1, 2), Dyadic(3, 2)]
    assert check_validity({0: Dyadic(1, 1)}, honest)
    assert not check_validity({0: Dyadic(7, 3)}, honest)


def test_epsilon_agreement_examples():
    assert check_epsilon_agreement([Dyadic(1, 2), Dyadic(1, 2) + Dyadic(1, 7)], Fraction(1, 64))
    assert not check_epsilon_agreement([0, 1], Fraction(1, 2))
    assert check_epsilon_agreement([0, Fraction(1, 2)], Fraction(1, 2))
    with pytest.raises(ValueError):
        check_epsilon_agreement([0], 0)


def test_agreement_and_coherence_examples():
    assert check_coherence({0: ("commit", 1), 1: ("adopt", 1)})
    assert not check_coherence({0: ("commit", 1), 1: ("adopt", 0)})
    assert check_coherence({0: ("adopt", 0), 1: ("adopt", 1)})
    assert check_agreement({0: 1, 1: 1})
    assert not check_agreement({0: 1, 1: 0})
    with pytest.raises(ValueError):
        check_coherence({0: ("maybe", 1)})


def test_convergence_requires_commit_on_equal_inputs():
    assert check_convergence({0: ("commit", 0), 1: ("commit", 0)}, [0, 0])
    assert not check_convergence({0: ("adopt", 0)}, [0, 0])
    assert check_convergence({0: ("adopt", 0)}, [0, 1])


def test_verdict_rendering_and_first_failure():
    ok, bad = check_agreement({0: 1}), check_agreement({0: 1, 1: 0})
    assert str(ok) == "agreement: pass"
    assert str(bad).startswith("agreement: FAIL")
    assert first_failure([ok, bad]) is bad
    assert first_failure([ok]) is None


@settings(max_examples=100, deadline=None)
@given(st.lists(dyadics(10), min_size=1, max_size=6), st.lists(dyadics(10), min_size=1, max_size=6))
def test_checkers_agree_with_brute_force(inputs, outputs):
    lo, hi = min(inputs), max(inputs)
    assert bool(check_validity(outputs, inputs)) == all(lo <= v <= hi for v in outputs)
    spread = max(outputs) - min(outputs)
    eps = Fraction(1, 8)
    assert bool(check_epsilon_agreement(outputs, eps)) == (spread.to_fraction() <= eps)
    # checkers are pure
    assert check_validity(outputs, inputs) == check_validity(outputs, inputs)
