from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macsim.protocols.storecollect import (EMPTY_VIEW, HistoryEvent, StoreCollect, View, ViewConflict,
                                           check_regularity, extract_history, history_from_jsonl,
                                           history_to_jsonl, merge_views, random_workload)
from macsim.sim.adversary import make_adversary
from macsim.sim.engine import ACK, CRASH, DELIVER, SEGMENT, Event, MacEngine
from macsim.sim.enumerate import explore


def collect_views(trace):
    return [h.value for h in extract_history(trace) if h.op == "collect" and h.edge == "resp"]


def play(engine, events):
    for ev in events:
        engine.apply(ev)
    return engine


def test_solo_store_then_collect():
    e = MacEngine([StoreCollect(0, [("store", "a"), ("collect",)])])
    trace = e.run(make_adversary("lockstep"))
    assert collect_views(trace) == [View({0: ("a", 0)})]
    assert check_regularity(extract_history(trace))


def test_completed_store_is_seen_by_later_collect():
    e = MacEngine([StoreCollect(0, [("store", "a")]), StoreCollect(1, [("collect",)])])
    play(e, [Event(SEGMENT, 0), Event(DELIVER, 0, 0), Event(DELIVER, 1, 0), Event(ACK, 0, 0), Event(SEGMENT, 0)])
    trace = e.run(make_adversary("random", 3))
    assert collect_views(trace)[0].get(0) == ("a", 0)


def _concurrent(store_first: bool):
    e = MacEngine([StoreCollect(0, [("store", "a")]), StoreCollect(1, [("collect",)])])
    e.apply(Event(SEGMENT, 0))  # store invoked, bid 0
    if store_first:
        play(e, [Event(DELIVER, 1, 0), Event(SEGMENT, 1), Event(DELIVER, 0, 1), Event(DELIVER, 1, 1),
                 Event(ACK, 1, 1), Event(SEGMENT, 1)])
    else:
        play(e, [Event(SEGMENT, 1), Event(DELIVER, 0, 1), Event(DELIVER, 1, 1), Event(ACK, 1, 1),
                 Event(SEGMENT, 1), Event(DELIVER, 1, 0)])
    return e.run(make_adversary("lockstep"))


def test_concurrent_store_and_collect_both_interleavings():
    early, late = _concurrent(True), _concurrent(False)
    assert collect_views(early)[0].get(0) == ("a", 0)
    assert collect_views(late)[0] == EMPTY_VIEW
    assert check_regularity(extract_history(early)) and check_regularity(extract_history(late))


# ----------------------------------------------------------------- merge

views = st.dictionaries(st.integers(0, 4), st.integers(0, 6), max_size=5).map(
    lambda d: View({j: (f"v{j}.{s}", s) for j, s in d.items()}))


def test_merge_examples():
    v = View({1: ("a", 1)})
    assert merge_views(EMPTY_VIEW, v) == v
    assert merge_views(v, View({1: ("b", 2)})) == View({1: ("b", 2)})
    with pytest.raises(ViewConflict):
        merge_views(v, View({1: ("z", 1)}))


@settings(max_examples=200, deadline=None)
@given(views, views, views)
def test_merge_is_a_join(a, b, c):
    assert merge_views(a, b) == merge_views(b, a)
    assert merge_views(merge_views(a, b), c) == merge_views(a, merge_views(b, c))
    assert merge_views(a, a) == a
    m = merge_views(a, b)
    assert a.precedes(m) and b.precedes(m)
    for j in set(a.entries) | set(b.entries):
        assert m.get(j)[1] == max(x.get(j)[1] for x in (a, b) if x.get(j) is not None)


# ------------------------------------------------------------- checker


def H(time, node, op, edge, value=None):
    return HistoryEvent(time, node, op, edge, value)


def test_missing_completed_store_violates_freshness():
    hist = [H(1, 1, "store", "inv", (5, 0)), H(2, 1, "store", "resp"),
            H(3, 2, "collect", "inv"), H(4, 2, "collect", "resp", EMPTY_VIEW)]
    v = check_regularity(hist)
    assert not v and v.name == "regularity-I"


def test_older_view_after_newer_violates_monotonicity():
    hist = [H(1, 1, "store", "inv", ("older", 0)), H(2, 1, "store", "resp"),
            H(3, 1, "store", "inv", ("a", 1)),
            H(4, 2, "collect", "inv"), H(5, 2, "collect", "resp", View({1: ("a", 1)})),
            H(6, 3, "collect", "inv"), H(7, 3, "collect", "resp", View({1: ("older", 0)}))]
    v = check_regularity(hist)
    assert not v and v.name == "regularity-II"


def test_value_never_stored_is_flagged():
    hist = [H(1, 2, "collect", "inv"), H(2, 2, "collect", "resp", View({7: ("ghost", 0)}))]
    assert not check_regularity(hist)


def test_malformed_histories_raise():
    with pytest.raises(ValueError):
        check_regularity([H(1, 0, "store", "resp")])
    with pytest.raises(ValueError):
        check_regularity([H(1, 0, "collect", "inv"), H(2, 0, "store", "inv", ("a", 0))])
    with pytest.raises(ValueError):
        history_from_jsonl('{"time": 1}\n')


def test_history_jsonl_round_trip():
    trace = MacEngine([StoreCollect(i, ops) for i, ops in enumerate(
        random_workload(3, 4, random.Random(1)))]).run(make_adversary("random", 1, 0.05))
    hist = extract_history(trace)
    again = history_from_jsonl(history_to_jsonl(hist))
    assert history_to_jsonl(again) == history_to_jsonl(hist)
    assert bool(check_regularity(again)) == bool(check_regularity(hist))


# ------------------------------------------------------------ protocol


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32), st.sampled_from(["random", "laggard", "fifo", "lockstep"]),
       st.sampled_from([0.0, 0.02, 0.1]))
def test_every_run_is_regular_and_wait_free(n, seed, adv, crash_rate):
    work = random_workload(n, 3, random.Random(seed))
    e = MacEngine([StoreCollect(i, ops) for i, ops in enumerate(work)])
    trace = e.run(make_adversary(adv, seed, crash_rate))
    assert not trace.timeout
    v = check_regularity(extract_history(trace))
    assert v, str(v)
    live = set(range(n)) - set(trace.crashed)
    responded = {}
    for h in extract_history(trace):
        if h.edge == "resp":
            responded[h.node] = responded.get(h.node, 0) + 1
    for i in live:
        assert responded.get(i, 0) == len(work[i]), "live node left an operation pending"


def test_exhaustive_two_node_schedules():
    work = [[("store", "a"), ("collect",)], [("collect",), ("store", "b")]]
    bad = []

    def visit(e, complete):
        v = check_regularity(extract_history(e.trace))
        if not v:
            bad.append(str(v))

    stats = explore(lambda: MacEngine([StoreCollect(i, ops) for i, ops in enumerate(work)]), visit, 10)
    assert not bad
    assert stats["leaves"] > 100
