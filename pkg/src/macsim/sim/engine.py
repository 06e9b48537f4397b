"""Deterministic discrete-event engine for the abstract MAC layer.

One event is applied per logical clock tick. The adversary picks which
enabled event happens next; the engine guarantees the transport rules:

* a broadcast is delivered to every node alive at submission (the sender
  included) unless that receiver crashes first;
* the acknowledgement becomes enabled only after every still-live node
  has received the message, and never fires once the sender crashed;
* a delivery runs the receiver's handler immediately unless its main
  thread holds the lock, in which case it is queued and drained at unlock;
* a main-thread segment never starts with unprocessed messages queued.
"""

from __future__ import annotations

from typing import Any, Callable, NamedTuple, Sequence

from .automaton import DONE, LOCK, UNLOCK, Automaton, Broadcast
from .trace import Trace

DELIVER = "deliver"
ACK = "ack"
CRASH = "crash"
SEGMENT = "segment"
TICK = "tick"

DEFAULT_EVENT_BUDGET = 10**6


class EngineFault(RuntimeError):
    """The engine was driven outside its contract (a harness/test bug)."""


class Event(NamedTuple):
    kind: str
    node: int
    bid: int = -1

    def __repr__(self) -> str:
        if self.bid >= 0:
            return f"{self.kind}({self.bid}->{self.node})" if self.kind == DELIVER else f"{self.kind}({self.bid})"
        return f"{self.kind}({self.node})"


class IndexedSet:
    """Set with O(1) add/remove and O(1) indexed access (for uniform picks)."""

    __slots__ = ("items", "pos")

    def __init__(self) -> None:
        self.items: list = []
        self.pos: dict = {}

    def add(self, x) -> None:
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x) -> None:
        i = self.pos.pop(x, None)
        if i is None:
            return
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def __contains__(self, x) -> bool:
        return x in self.pos

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def copy(self) -> "IndexedSet":
        c = IndexedSet()
        c.items = list(self.items)
        c.pos = dict(self.pos)
        return c


class BroadcastRecord:
    __slots__ = ("bid", "sender", "seq", "payload", "pending", "delivered", "acked")

    def __init__(self, bid: int, sender: int, seq: int, payload: Any, pending: set) -> None:
        self.bid = bid
        self.sender = sender
        self.seq = seq
        self.payload = payload
        self.pending = pending
        self.delivered: set = set()
        self.acked = False

    def clone(self) -> "BroadcastRecord":
        c = BroadcastRecord(self.bid, self.sender, self.seq, self.payload, set(self.pending))
        c.delivered = set(self.delivered)
        c.acked = self.acked
        return c


class NodeSlot:
    __slots__ = ("automaton", "alive", "locked", "inbox", "waiting", "done", "seq")

    def __init__(self, automaton: Automaton) -> None:
        self.automaton = automaton
        self.alive = True
        self.locked = False
        self.inbox: list = []
        self.waiting = -1
        self.done = False
        self.seq = 0

    def clone(self) -> "NodeSlot":
        c = NodeSlot(self.automaton.clone())
        c.alive = self.alive
        c.locked = self.locked
        c.inbox = list(self.inbox)
        c.waiting = self.waiting
        c.done = self.done
        c.seq = self.seq
        return c


class MacEngine:
    """Abstract MAC layer over ``len(automata)`` nodes."""

    def __init__(
        self,
        automata: Sequence[Automaton],
        *,
        max_crashes: int | None = None,
        record_events: bool = True,
        meta: dict | None = None,
        eager_start: bool = False,
    ) -> None:
        self.n = len(automata)
        self.nodes = [NodeSlot(a) for a in automata]
        self.max_crashes = self.n - 1 if max_crashes is None else max_crashes
        self.crashes = 0
        self.clock = 0
        self.next_bid = 0
        self.inflight: dict[int, BroadcastRecord] = {}
        self.segments = IndexedSet()
        self.deliveries = IndexedSet()
        self.acks = IndexedSet()
        self.trace = Trace(self.n, meta=meta, record_events=record_events)
        for i in range(self.n):
            self.segments.add(Event(SEGMENT, i))
        if eager_start:
            # every node reaches its first broadcast before anything is delivered
            for i in range(self.n):
                while Event(SEGMENT, i) in self.segments:
                    self._segment(i)

    # ------------------------------------------------------------------ views

    def alive(self) -> list[int]:
        return [i for i, s in enumerate(self.nodes) if s.alive]

    def crashable(self) -> list[int]:
        if self.crashes >= self.max_crashes:
            return []
        return [i for i, s in enumerate(self.nodes) if s.alive and not s.done]

    def enabled_events(self) -> list[Event]:
        """Every event the transport currently permits, in a canonical order."""
        evs = sorted(self.segments.items)
        evs += sorted(self.deliveries.items, key=lambda e: (e.bid, e.node))
        evs += sorted(self.acks.items, key=lambda e: e.bid)
        evs += [Event(CRASH, i) for i in self.crashable()]
        return evs

    def is_enabled(self, ev: Event) -> bool:
        if ev.kind == SEGMENT:
            return ev in self.segments
        if ev.kind == DELIVER:
            return ev in self.deliveries
        if ev.kind == ACK:
            return ev in self.acks
        if ev.kind == CRASH:
            s = self.nodes[ev.node]
            return self.crashes < self.max_crashes and s.alive and not s.done
        return False

    def finished(self) -> bool:
        return all(s.done or not s.alive for s in self.nodes)

    def quiescent(self) -> bool:
        return not (self.segments or self.deliveries or self.acks)

    def sender_of(self, bid: int) -> int:
        return self.inflight[bid].sender

    def seq_of(self, bid: int) -> int:
        return self.inflight[bid].seq

    # ------------------------------------------------------------ transitions

    def apply(self, ev: Event, *, crash_keep: Callable[[BroadcastRecord, list[int]], set] | None = None) -> None:
        kind = ev.kind
        if kind == DELIVER:
            if ev not in self.deliveries:
                raise EngineFault(f"{ev!r} is not enabled")
            self._deliver(ev)
        elif kind == SEGMENT:
            if ev not in self.segments:
                raise EngineFault(f"{ev!r} is not enabled")
            self._segment(ev.node)
        elif kind == ACK:
            if ev not in self.acks:
                raise EngineFault(f"{ev!r} is not enabled")
            self._ack(ev)
        elif kind == CRASH:
            if not self.is_enabled(ev):
                raise EngineFault(f"{ev!r} is not enabled")
            self._crash(ev.node, crash_keep)
        else:
            raise EngineFault(f"unknown event kind {kind!r}")

    def _tick(self, kind: str, node: int, bid: int = -1) -> int:
        self.clock += 1
        self.trace.event(self.clock, kind, node, bid)
        return self.clock

    def _collect(self, i: int, a: Automaton) -> None:
        if a.notes:
            self.trace.notes_from(self.clock, i, a.notes)
            a.notes.clear()

    def submit_broadcast(self, i: int, payload: Any) -> int:
        slot = self.nodes[i]
        if not slot.alive:
            raise EngineFault(f"broadcast from crashed node {i}")
        if slot.waiting >= 0:
            raise EngineFault(f"node {i} already has a broadcast in flight")
        bid = self.next_bid
        self.next_bid += 1
        receivers = {j for j, s in enumerate(self.nodes) if s.alive}
        rec = BroadcastRecord(bid, i, slot.seq, payload, receivers)
        slot.seq += 1
        self.inflight[bid] = rec
        self.trace.broadcast(bid, i, rec.seq, payload, self.clock)
        for j in receivers:
            self.deliveries.add(Event(DELIVER, j, bid))
        slot.waiting = bid
        self.segments.discard(Event(SEGMENT, i))
        return bid

    def _segment(self, i: int) -> None:
        slot = self.nodes[i]
        if slot.inbox and not slot.locked:
            raise EngineFault(f"segment of node {i} with undrained messages")
        self._tick(SEGMENT, i)
        a = slot.automaton
        action = a.step()
        if type(action) is Broadcast:
            if slot.locked:
                raise EngineFault("broadcast while holding the lock")
            self._collect(i, a)
            self.submit_broadcast(i, action.payload)
            return
        if action is LOCK:
            slot.locked = True
        elif action is UNLOCK:
            slot.locked = False
            while slot.inbox:
                a.receive(slot.inbox.pop(0))
        elif action is DONE:
            slot.done = True
            self.segments.discard(Event(SEGMENT, i))
            if a.decided:
                self.trace.output(i, a.output, self.clock)
        else:
            raise EngineFault(f"unknown action {action!r}")
        self._collect(i, a)

    def _deliver(self, ev: Event) -> None:
        j, bid = ev.node, ev.bid
        self.deliveries.discard(ev)
        rec = self.inflight[bid]
        rec.pending.discard(j)
        rec.delivered.add(j)
        self._tick(DELIVER, j, bid)
        slot = self.nodes[j]
        if slot.locked:
            slot.inbox.append(rec.payload)
        else:
            slot.automaton.receive(rec.payload)
            self._collect(j, slot.automaton)
        self._maybe_enable_ack(rec)

    def _maybe_enable_ack(self, rec: BroadcastRecord) -> None:
        if rec.pending:
            return
        if not rec.acked and self.nodes[rec.sender].alive:
            self.acks.add(Event(ACK, rec.sender, rec.bid))
        elif not self.nodes[rec.sender].alive:
            self.inflight.pop(rec.bid, None)

    def _ack(self, ev: Event) -> None:
        self.acks.discard(ev)
        rec = self.inflight.pop(ev.bid)
        rec.acked = True
        slot = self.nodes[rec.sender]
        slot.waiting = -1
        self._tick(ACK, rec.sender, rec.bid)
        self.trace.acked(rec.bid, self.clock)
        if not slot.done:
            self.segments.add(Event(SEGMENT, rec.sender))

    def _crash(self, i: int, crash_keep) -> None:
        slot = self.nodes[i]
        slot.alive = False
        self.crashes += 1
        self._tick(CRASH, i)
        self.trace.crash(i, self.clock)
        self.segments.discard(Event(SEGMENT, i))
        slot.inbox.clear()
        for rec in list(self.inflight.values()):
            if i in rec.pending:
                rec.pending.discard(i)
                self.deliveries.discard(Event(DELIVER, i, rec.bid))
            if rec.sender == i:
                self.acks.discard(Event(ACK, i, rec.bid))
                candidates = sorted(rec.pending)
                keep = crash_keep(rec, candidates) if crash_keep else set(candidates)
                for j in candidates:
                    if j not in keep:
                        rec.pending.discard(j)
                        self.deliveries.discard(Event(DELIVER, j, rec.bid))
            self._maybe_enable_ack(rec)

    # ------------------------------------------------------------------ misc

    def clone(self) -> "MacEngine":
        c = MacEngine.__new__(MacEngine)
        c.n = self.n
        c.nodes = [s.clone() for s in self.nodes]
        c.max_crashes = self.max_crashes
        c.crashes = self.crashes
        c.clock = self.clock
        c.next_bid = self.next_bid
        c.inflight = {b: r.clone() for b, r in self.inflight.items()}
        c.segments = self.segments.copy()
        c.deliveries = self.deliveries.copy()
        c.acks = self.acks.copy()
        c.trace = self.trace.clone()
        return c

    def run(self, adversary, budget: int = DEFAULT_EVENT_BUDGET) -> Trace:
        """Let ``adversary`` schedule until every live node is done."""
        adversary.attach(self)
        keep = adversary.crash_subset
        while not self.finished():
            if self.clock >= budget or self.quiescent():
                self.trace.timeout = True
                break
            ev = adversary.choose(self)
            self.apply(ev, crash_keep=keep)
        self.trace.finish(self)
        return self.trace
