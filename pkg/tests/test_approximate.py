from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dyadics
from macsim.checkers import check_epsilon_agreement, check_validity
from macsim.dyadic import Dyadic
from macsim.harness.config import ExperimentConfig
from macsim.harness.experiment import run_seed
from macsim.protocols import approximate as ac
from macsim.sim.adversary import make_adversary
from macsim.sim.engine import MacEngine
from macsim.sim.enumerate import explore

ADVS = ["random", "lockstep", "laggard", "fifo"]


def run(autos, adv="random", seed=0, crash_rate=0.0):
    return MacEngine(autos, eager_start=True).run(make_adversary(adv, seed, crash_rate))


def brute_halving(eps: Fraction) -> int:
    p = 0
    while Fraction(1, 2**p) > eps:
        p += 1
    return p


def brute_contraction(eps: Fraction, n: int) -> int:
    q, p, x = 1 - Fraction(1, 2**n), 0, Fraction(1)
    while x > eps:
        x *= q
        p += 1
    return p


def test_phase_count_examples():
    assert ac.halving_phases(Fraction(1, 100)) == 7 == math.ceil(math.log2(100))
    assert ac.contraction_phases(Fraction(1, 10), 4) == 36 == math.ceil(math.log(0.1) / math.log(15 / 16))
    assert ac.halving_phases(Fraction(1, 64)) == 6
    assert ac.halving_phases(1) == 0
    with pytest.raises(ValueError):
        ac.halving_phases(0)
    with pytest.raises(ValueError):
        ac.contraction_phases(Fraction(1, 2), 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_phase_counts_match_brute_force(a, b):
    eps = Fraction(min(a, b), max(a, b))
    assert ac.halving_phases(eps) == brute_halving(eps)
    if eps >= Fraction(1, 1000):
        for n in (1, 2, 4, 6):
            assert ac.contraction_phases(eps, n) == brute_contraction(eps, n)


def test_input_range_enforced():
    with pytest.raises(ValueError):
        ac.MacAc(Dyadic(3, 1), 2)
    with pytest.raises(ValueError):
        ac.MacAc2(-1, 2)


def test_lockstep_two_nodes_meet_in_the_middle():
    for seed in range(5):
        trace = run([ac.MacAc(0, 1), ac.MacAc(1, 1)], "lockstep", seed)
        assert trace.outputs == {0: Dyadic(1, 1), 1: Dyadic(1, 1)}


@pytest.mark.parametrize("make", [lambda x: ac.MacAc(x, 5), lambda x: ac.MacAc2(x, 5),
                                  lambda x: ac.MacAc(x, 5, carry_extremes=False)])
def test_equal_inputs_stay_put(make):
    x = Dyadic(3, 3)
    for seed in range(10):
        trace = run([make(x) for _ in range(4)], "random", seed, 0.02)
        assert set(trace.outputs.values()) <= {x}
        assert all(set(r.states.values()) == {x} for r in ac.phase_ranges(trace))


def test_mac_ac2_one_phase_shrink_over_all_short_schedules():
    bound = Fraction(3, 4)
    bad, seen = [], []

    def visit(e, complete):
        rows = {r.p: r for r in ac.phase_ranges(e.trace)}
        if 1 in rows:
            seen.append(1)
            if rows[1].range.to_fraction() > bound * rows[0].range.to_fraction():
                bad.append(rows[1].states)

    explore(lambda: MacEngine([ac.MacAc2(0, 1), ac.MacAc2(1, 1)], eager_start=True), visit, 10)
    assert seen and not bad


@settings(max_examples=60, deadline=None)
@given(st.lists(dyadics(10), min_size=2, max_size=6), st.integers(0, 2**32), st.sampled_from(ADVS),
       st.sampled_from([0.0, 0.01, 0.05]), st.integers(1, 7))
def test_mac_ac_invariants(inputs, seed, adv, crash_rate, p_end):
    trace = run([ac.MacAc(x, p_end) for x in inputs], adv, seed, crash_rate)
    assert not trace.timeout
    rows = ac.phase_ranges(trace)
    assert rows[0].states == dict(enumerate(inputs))
    assert check_validity(trace.outputs, inputs)
    assert check_epsilon_agreement(trace.outputs, Fraction(1, 2**p_end))
    for check in (ac.check_halving(rows), ac.check_mac_ac_movers(rows), ac.check_jump_provenance(rows)):
        assert check[0], check[1]


@settings(max_examples=60, deadline=None)
@given(st.lists(dyadics(10), min_size=2, max_size=5), st.integers(0, 2**32), st.sampled_from(ADVS),
       st.sampled_from([0.0, 0.02]), st.integers(1, 12))
def test_mac_ac2_invariants(inputs, seed, adv, crash_rate, p_end):
    n = len(inputs)
    trace = run([ac.MacAc2(x, p_end) for x in inputs], adv, seed, crash_rate)
    assert not trace.timeout
    rows = ac.phase_ranges(trace)
    assert check_validity(trace.outputs, inputs)
    assert check_epsilon_agreement(trace.outputs, (1 - Fraction(1, 2**n)) ** p_end)
    for check in (ac.check_contraction(rows, n), ac.check_mac_ac2_movers(rows, n),
                  ac.check_jump_provenance(rows, ac.copied_values(trace))):
        assert check[0], check[1]


def test_first_completer_is_the_earliest_ack():
    trace = run([ac.MacAc(0, 2), ac.MacAc(1, 2), ac.MacAc(Dyadic(1, 1), 2)], "random", 4)
    rows = ac.phase_ranges(trace)
    for row in rows:
        acks = [(rec[4], rec[0]) for rec in trace.broadcasts.values()
                if rec[4] is not None and rec[2].phase == row.p]
        assert row.i_p == (min(acks)[1] if acks else None)


def test_literal_listing_breaks_the_mover_bound():
    # pending jump to phase 1, then the first completer's phase-1 value
    # arrives and is wiped by the phase-start reset
    base = ExperimentConfig("mac-ac", 4, crash_rate=0.01).validate()
    literal = run_seed(base.with_(extra={"carry_extremes": False}), 215)
    names = {v.name for v in literal.failures}
    assert "mover-interval" in names
    assert not run_seed(base, 215).failures
