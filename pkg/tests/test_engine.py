from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macsim.sim.adversary import ADVERSARIES, RedactedView, make_adversary
from macsim.sim.automaton import DONE, LOCK, UNLOCK, Automaton, Broadcast
from macsim.sim.engine import ACK, CRASH, DELIVER, SEGMENT, EngineFault, Event, MacEngine


class Chatter(Automaton):
    """Broadcast ``k`` messages, then stop; remember everything received."""

    def __init__(self, k: int = 1) -> None:
        super().__init__()
        self.k = k
        self.got: list = []

    def step(self):
        if self.pc < self.k:
            self.pc += 1
            return Broadcast(("m", self.pc))
        return self.decide(len(self.got))

    def receive(self, msg) -> None:
        self.got.append(msg)


class Locker(Automaton):
    """Lock, broadcast-free critical section, unlock, then broadcast once."""

    def __init__(self) -> None:
        super().__init__()
        self.got: list = []

    def step(self):
        self.pc += 1
        if self.pc == 1:
            return LOCK
        if self.pc == 2:
            self.got.append("unlock")
            return UNLOCK
        if self.pc == 3:
            return Broadcast("x")
        return self.decide(None)

    def receive(self, msg) -> None:
        self.got.append(msg)


def seg(i):
    return Event(SEGMENT, i)


def deliver(j, bid):
    return Event(DELIVER, j, bid)


def ack(i, bid):
    return Event(ACK, i, bid)


def test_broadcast_deliver_ack_then_resume():
    e = MacEngine([Chatter(), Chatter(0)])
    e.apply(seg(0))
    assert e.nodes[0].waiting == 0
    e.apply(deliver(0, 0))
    assert ack(0, 0) not in e.enabled_events()
    e.apply(deliver(1, 0))
    assert ack(0, 0) in e.enabled_events()
    assert seg(0) not in e.enabled_events()
    e.apply(ack(0, 0))
    assert seg(0) in e.enabled_events()
    assert e.nodes[0].automaton.got == [("m", 1)] == e.nodes[1].automaton.got


def test_crashed_sender_partial_delivery():
    e = MacEngine([Chatter(), Chatter(0), Chatter(0)])
    e.apply(seg(0))
    e.apply(Event(CRASH, 0), crash_keep=lambda rec, cands: {1})
    evs = e.enabled_events()
    assert deliver(1, 0) in evs and deliver(2, 0) not in evs
    e.apply(deliver(1, 0))
    assert not any(ev.kind == ACK for ev in e.enabled_events())
    assert e.nodes[2].automaton.got == []
    assert 0 not in e.inflight


def test_broadcast_after_crash_skips_dead_receiver():
    e = MacEngine([Chatter(), Chatter(0), Chatter(0)])
    for _ in range(4):  # burn clock to 4
        e.clock += 1
    e.apply(Event(CRASH, 2))
    assert e.clock == 5
    e.apply(seg(0))
    assert e.clock == 6
    dels = [ev for ev in e.enabled_events() if ev.kind == DELIVER]
    assert dels == [deliver(0, 0), deliver(1, 0)]
    e.apply(deliver(1, 0))
    e.apply(deliver(0, 0))
    assert ack(0, 0) in e.enabled_events()


def test_enabled_after_submit():
    e = MacEngine([Chatter(), Chatter(), Chatter()])
    e.apply(seg(0))
    evs = set(e.enabled_events())
    want = {deliver(j, 0) for j in range(3)} | {seg(1), seg(2)} | {Event(CRASH, i) for i in range(3)}
    assert evs == want


def test_non_enabled_event_is_a_fault():
    e = MacEngine([Chatter()])
    with pytest.raises(EngineFault):
        e.apply(ack(0, 0))
    with pytest.raises(EngineFault):
        e.apply(deliver(0, 3))
    with pytest.raises(EngineFault):
        e.apply(Event(CRASH, 0))  # n=1 allows no crash
    with pytest.raises(EngineFault):
        e.apply(Event("teleport", 0))


def test_submit_from_crashed_node_is_a_fault():
    e = MacEngine([Chatter(), Chatter()])
    e.apply(Event(CRASH, 1))
    with pytest.raises(EngineFault):
        e.submit_broadcast(1, "ghost")


def test_crash_disables_pending_ack():
    e = MacEngine([Chatter(), Chatter()])
    e.apply(seg(0))
    e.apply(deliver(0, 0))
    e.apply(deliver(1, 0))
    assert ack(0, 0) in e.enabled_events()
    e.apply(Event(CRASH, 0))
    assert ack(0, 0) not in e.enabled_events()


def test_handler_deferred_while_locked_and_drained_at_unlock():
    e = MacEngine([Locker(), Chatter()])
    e.apply(seg(0))  # LOCK
    e.apply(seg(1))  # node 1 broadcasts
    e.apply(deliver(0, 0))
    a = e.nodes[0].automaton
    assert a.got == [] and e.nodes[0].inbox == [("m", 1)]
    e.apply(seg(0))  # UNLOCK drains the queue
    assert a.got == ["unlock", ("m", 1)]
    assert e.nodes[0].inbox == []


def test_lockstep_run_is_complete():
    e = MacEngine([Chatter(2) for _ in range(3)])
    trace = e.run(make_adversary("lockstep"))
    assert not trace.timeout
    assert trace.outputs == {0: 6, 1: 6, 2: 6}


def test_unknown_adversary():
    with pytest.raises(ValueError):
        make_adversary("omniscient")


def test_redacted_view_hides_payloads():
    e = MacEngine([Chatter(), Chatter()])
    e.apply(seg(0))
    v = RedactedView(e)
    assert not hasattr(v, "inflight") and not hasattr(v, "payload")
    assert v.sender(0) == 0 and v.seq(0) == 0
    assert all(isinstance(ev, Event) for ev in v.enabled())


# ----------------------------------------------------------- invariants


def _check_invariants(trace, n):
    crashed: dict[int, int] = {}
    delivered: dict[int, set] = {}
    for time, kind, node, bid in trace.events:
        if kind == CRASH:
            crashed[node] = time
        elif kind == DELIVER:
            assert node not in crashed, "delivery after the receiver crashed"
            delivered.setdefault(bid, set()).add(node)
        elif kind == ACK:
            alive = {j for j in range(n) if j not in crashed}
            assert alive <= delivered.get(bid, set()), "ack before every live node received"
            assert node not in crashed
    times = [ev[0] for ev in trace.events]
    assert times == list(range(1, len(times) + 1)), "one event per clock value"


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32), st.sampled_from(sorted(ADVERSARIES)),
       st.sampled_from([0.0, 0.05, 0.2]), st.integers(1, 3))
def test_transport_invariants(n, seed, adv, crash_rate, k):
    e = MacEngine([Chatter(k) for _ in range(n)] + [Locker()])
    trace = e.run(make_adversary(adv, seed, crash_rate))
    assert not trace.timeout
    _check_invariants(trace, n + 1)
    # wait-freedom: every live node finished
    assert all(s.done for s in e.nodes if s.alive)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32), st.sampled_from(sorted(ADVERSARIES)))
def test_runs_are_deterministic(n, seed, adv):
    def once():
        e = MacEngine([Chatter(2) for _ in range(n)])
        return e.run(make_adversary(adv, seed, 0.1)).to_jsonl()

    assert once() == once()


def test_budget_exhaustion_marks_timeout():
    e = MacEngine([Chatter(50) for _ in range(3)])
    trace = e.run(make_adversary("random", 1), budget=20)
    assert trace.timeout and trace.end_time == 20
