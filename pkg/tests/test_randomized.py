from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macsim.checkers import check_agreement, check_coherence, check_convergence, check_validity
from macsim.protocols import randomized as rz
from macsim.sim.adversary import make_adversary
from macsim.sim.engine import MacEngine
from macsim.sim.enumerate import explore
from macsim.sim.rng import NodeRng

ADVS = ["random", "lockstep", "laggard", "fifo"]


# ------------------------------------------------------------ adopt-commit


def test_all_zero_inputs_commit():
    for seed in range(30):
        e = MacEngine([rz.AdoptCommit(0) for _ in range(4)])
        trace = e.run(make_adversary("random", seed, 0.05))
        assert all(o == ("commit", 0) for o in trace.outputs.values())


def test_lockstep_both_adopt():
    e = MacEngine([rz.AdoptCommit(0), rz.AdoptCommit(1)])
    trace = e.run(make_adversary("lockstep"))
    # each node saw the other's VALUE before its final check
    assert [o[0] for o in trace.outputs.values()] == ["adopt", "adopt"]


def test_non_binary_input_rejected():
    with pytest.raises(ValueError):
        rz.AdoptCommit(2)
    with pytest.raises(ValueError):
        rz.Rbc(True, NodeRng(0, 0))


@pytest.mark.parametrize("inputs", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_adopt_commit_exhaustive_two_nodes(inputs):
    bad = []

    def visit(e, complete):
        outs = e.trace.outputs
        for v in (check_validity({i: o[1] for i, o in outs.items()}, inputs, binary=True),
                  check_coherence(outs), check_convergence(outs, inputs)):
            if not v:
                bad.append(str(v))

    stats = explore(lambda: MacEngine([rz.AdoptCommit(x) for x in inputs]), visit, 14)
    assert not bad
    assert stats["complete"] > 0


# ----------------------------------------------------------------- MAC-RBC


def test_phase_bound_and_paper_constant():
    assert rz.rbc_phase_bound(3, 0.01) == 19  # ceil(4 * 4.605...)
    assert 4 * math.log(100) < 19 <= 4 * math.log(100) + 1
    assert rz.paper_c(0.05) == pytest.approx(73.78, abs=5e-3)


def test_all_ones_decide_in_phase_zero():
    for seed in range(20):
        e = MacEngine([rz.Rbc(1, NodeRng(seed, i)) for i in range(3)])
        trace = e.run(make_adversary("random", seed))
        assert set(trace.outputs.values()) == {1}
        assert set(rz.decision_phases(trace).values()) == {0}


def test_solo_rbc_decides_own_input_in_phase_zero():
    trace = MacEngine([rz.Rbc(1, NodeRng(0, 0))]).run(make_adversary("random"))
    assert trace.outputs == {0: 1} and rz.decision_phases(trace) == {0: 0}


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32), st.sampled_from(ADVS), st.sampled_from([0.0, 0.01]),
       st.booleans())
def test_rbc_agreement_validity_and_two_phase_locality(n, seed, adv, crash_rate, second):
    bits = NodeRng(seed, 99)
    inputs = [bits.bit() for _ in range(n)]
    if second:
        autos = [rz.Rbc2(x, NodeRng(seed, i)) for i, x in enumerate(inputs)]
    else:
        autos = [rz.Rbc(x, NodeRng(seed, i)) for i, x in enumerate(inputs)]
    trace = MacEngine(autos).run(make_adversary(adv, seed, crash_rate))
    assert not trace.timeout
    assert check_agreement(trace.outputs)
    assert check_validity(trace.outputs, inputs, binary=True)
    ph = rz.decision_phases(trace)
    if ph:
        assert max(ph.values()) - min(ph.values()) <= 1


# ------------------------------------------------------------ first mover


def test_coin_probability():
    assert rz.coin_probability(0, 4) == 1 / 8
    assert rz.coin_probability(3, 4) == 1.0
    assert rz.coin_probability(100, 4) == 1.0
    with pytest.raises(ValueError):
        rz.FirstMover(0, 0, NodeRng(0, 0))


def test_solo_first_mover_returns_input():
    trace = rz.run_first_mover(1, 1, 5, inputs=[1])
    assert trace.outputs == {0: 1}
    c = rz.classify_trace(trace)
    assert c["successful"] == {0: 1} and c["flags"] == {0: "one"}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32), st.sampled_from(ADVS))
def test_classification_recount(n, seed, adv):
    trace = rz.run_first_mover(n, n, seed, adv)
    c = rz.classify_trace(trace)
    # crash-free: each node makes exactly one follow-up, everything else is original
    assert c["N_F"] == n
    assert c["N_O"] == len(trace.broadcasts) - n
    assert c["N_RBC"] == 0
    t = c["phases"][0]
    assert t.coin + t.dummy == c["N_O"] and t.follow == n
    assert t.successful >= 1  # the first completed original coin is always echoed
    if t.successful == 1:
        assert check_agreement(trace.outputs)
    assert check_validity(trace.outputs, trace.meta["inputs"], binary=True)


def test_plain_rbc_has_no_conciliator_broadcasts():
    trace = MacEngine([rz.Rbc(0, NodeRng(0, 0))]).run(make_adversary("random"))
    assert rz.classify_trace(trace)["phases"] == []


def test_classify_rejects_foreign_traces():
    from macsim.protocols.approximate import MacAc
    from macsim.dyadic import Dyadic

    trace = MacEngine([MacAc(Dyadic(0), 1)]).run(make_adversary("random"))
    with pytest.raises(ValueError):
        rz.classify_trace(trace)


def test_estimate_examples_and_errors():
    est = rz.estimate_firstmover_success(1, 1, 100, seed=3)
    assert est.probability == 1.0 and est.exactly_one == 100
    with pytest.raises(ValueError):
        rz.estimate_firstmover_success(4, 4, 99)
    with pytest.raises(ValueError):
        rz.estimate_firstmover_success(4, 2, 200)


# -------------------------------------------------------------------- RBC2


def test_rbc2_equal_inputs_skip_the_conciliator():
    for seed in range(10):
        autos = [rz.Rbc2(1, NodeRng(seed, i)) for i in range(4)]
        trace = MacEngine(autos).run(make_adversary("random", seed))
        c = rz.classify_trace(trace)
        assert c["N_O"] == c["N_F"] == 0
        assert set(rz.decision_phases(trace).values()) == {0}


def test_rbc2_size_estimate_doubles():
    a = rz.Rbc2(0, NodeRng(0, 0), n0=3, c=2)
    for p, want in [(0, 3), (1, 3), (2, 6), (5, 12)]:
        a.p = p
        a.conciliate()
        assert a.n_est == want
    with pytest.raises(ValueError):
        rz.Rbc2(0, NodeRng(0, 0), n0=0)
