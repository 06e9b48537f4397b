"""Fair-lossy periodic-broadcast transport.

Every live node broadcasts a datagram of its current state every ``t``
clock units. Each copy (one per other node) is dropped independently with
probability ``drop`` or, under the ``adversarial`` policy, always dropped
unless fairness forces it through. Surviving copies wait in a per-channel
buffer of bounded size and are delivered in an order the scheduler picks;
a delivered copy may stay behind as a duplicate.

Fairness: for every ordered pair of live honest nodes ``(i, j)`` the gap
between two deliveries ``i -> j`` never exceeds ``Delta``. When a gap gets
within ``n(n-1)`` of that bound the engine delivers ``i``'s latest
datagram itself and logs the forced delivery in ``trace.forced``. Delta
must leave room in every forcing window for main-thread steps after the
worst case of forced deliveries and ticks, or the run could livelock.

Lossy automata carry their own identifier (the protocols count distinct
senders) and expose ``state()`` for the periodic broadcast, ``receive()``
for the atomic handler and ``pending()``/``step()`` for main-thread work.
A node keeps broadcasting its final state after it outputs so that slower
nodes can still catch up.

Byzantine nodes run no automaton. A strategy callable produces, at each of
their ticks, one ``(value, phase)`` pair per receiver (or ``None``); the
engine stamps the true sender id on every datagram.
"""

from __future__ import annotations

import heapq
import random
from typing import Any, Callable, NamedTuple, Sequence

from .engine import CRASH, DEFAULT_EVENT_BUDGET, DELIVER, SEGMENT, TICK, EngineFault, IndexedSet
from .trace import Trace


class Datagram(NamedTuple):
    sender: int
    v: Any
    phase: int


class LossyConfig(NamedTuple):
    t: int
    Delta: int
    drop: float = 0.0
    policy: str = "iid"  # or "adversarial"
    duplicate: float = 0.0
    buffer_cap: int = 2

    def validate(self, n: int) -> "LossyConfig":
        if self.t < 1:
            raise ValueError("broadcast period t must be positive")
        if spare_slots(n, self.t, self.Delta) < n:
            need = min_delta(n, self.t)
            if need is None:
                raise ValueError(f"broadcast period t={self.t} must exceed n={n}")
            raise ValueError(f"Delta too small for n={n}, t={self.t}: need Delta >= {need}")
        if not 0 <= self.drop <= 1 or not 0 <= self.duplicate < 1:
            raise ValueError("drop must lie in [0, 1] and duplicate in [0, 1)")
        if self.policy not in ("iid", "adversarial"):
            raise ValueError(f"unknown drop policy {self.policy!r}")
        if self.buffer_cap < 1:
            raise ValueError("buffer_cap must be positive")
        return self


def spare_slots(n: int, t: int, Delta: int) -> int:
    """Clock values left per forcing window once every pair is forced and every node ticks."""
    w = Delta - n * (n - 1)
    if w <= 0:
        return -1
    return w - n * (n - 1) - n * (w // t + 1)


def min_delta(n: int, t: int) -> int | None:
    """Smallest Delta that leaves ``n`` spare slots per window, or None if no Delta does."""
    if t <= n:
        return None
    d = 2 * n * (n - 1) + n
    while spare_slots(n, t, d) < n:
        d += 1
    return d


def default_lossy(n: int, drop: float = 0.0, **kw) -> LossyConfig:
    t = kw.pop("t", 2 * n)
    delta = kw.pop("Delta", n * (n - 1) + 2 * n * (n + 1) + 2 * t)
    return LossyConfig(t, delta, drop, **kw).validate(n)


class ByzContext:
    """What a Byzantine strategy may look at when forging a datagram.

    ``rng`` is seeded from ``(run seed, node, receiver, tick)`` on first use.
    """

    __slots__ = ("node", "receiver", "tick", "receiver_phase", "honest_values", "n", "_seed", "_rng")

    def __init__(self, node: int, receiver: int, tick: int, receiver_phase: int, honest_values: tuple,
                 n: int, seed: int = 0) -> None:
        self.node = node
        self.receiver = receiver
        self.tick = tick
        self.receiver_phase = receiver_phase
        self.honest_values = honest_values
        self.n = n
        self._seed = seed
        self._rng: random.Random | None = None

    @property
    def rng(self) -> random.Random:
        if self._rng is None:
            self._rng = random.Random(hash((self._seed, self.node, self.receiver, self.tick)))
        return self._rng


ByzStrategy = Callable[[ByzContext], "tuple[Any, int] | None"]


class LossyEngine:
    """Periodic broadcast over fair-lossy channels with up to ``max_crashes`` crashes."""

    def __init__(
        self,
        automata: Sequence[Any],
        config: LossyConfig,
        *,
        seed: int = 0,
        byzantine: dict[int, ByzStrategy] | None = None,
        max_crashes: int = 0,
        crash_rate: float = 0.0,
        record_events: bool = True,
        meta: dict | None = None,
    ) -> None:
        self.n = len(automata)
        self.cfg = config.validate(self.n)
        self.automata = list(automata)
        self.byz = dict(byzantine or {})
        for b in self.byz:
            if self.automata[b] is not None:
                raise EngineFault(f"Byzantine node {b} must not host an automaton")
        self.honest = [i for i in range(self.n) if i not in self.byz]
        self.alive = [True] * self.n
        self.max_crashes = max_crashes
        self.crash_rate = crash_rate
        self.crashes = 0
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = 0
        self.next_bid = 0
        self.trace = Trace(self.n, meta=meta, record_events=record_events)
        self.latest: list[int] = [-1] * self.n
        self.payloads: dict[int, Datagram] = {}
        self.buffers: dict[tuple[int, int], list[int]] = {}
        self.channels = IndexedSet()
        self.segments = IndexedSet()
        self.ticks = [(i, i) for i in range(self.n)]  # (due, node), staggered start
        heapq.heapify(self.ticks)
        self.margin = self.n * (self.n - 1)
        self.last = {}
        self.deadlines: list[tuple[int, int, int]] = []
        for i in self.honest:
            for j in self.honest:
                if i != j:
                    self.last[i, j] = 0
                    heapq.heappush(self.deadlines, (self.cfg.Delta - self.margin, i, j))
        for i in self.honest:
            self._collect(i)
            self._refresh(i)

    # ------------------------------------------------------------------ views

    def phase_of(self, i: int) -> int:
        a = self.automata[i]
        return a.state()[1] if a is not None else -1

    def done(self) -> bool:
        return all(self.automata[i].decided or not self.alive[i] for i in self.honest)

    # ------------------------------------------------------------------ steps

    def _event(self, kind: str, node: int, bid: int = -1) -> None:
        self.clock += 1
        self.trace.event(self.clock, kind, node, bid)

    def _collect(self, i: int) -> None:
        a = self.automata[i]
        if a.notes:
            self.trace.notes_from(self.clock, i, a.notes)
            a.notes.clear()
        if a.decided and i not in self.trace.outputs:
            self.trace.output(i, a.output, self.clock)

    def _refresh(self, i: int) -> None:
        if self.alive[i] and self.automata[i].pending():
            self.segments.add(i)
        else:
            self.segments.discard(i)

    def _new_bid(self, sender: int, payload: Datagram) -> int:
        bid = self.next_bid
        self.next_bid += 1
        self.payloads[bid] = payload
        self.trace.broadcast(bid, sender, bid, payload, self.clock)
        return bid

    def _enqueue(self, i: int, j: int, bid: int) -> None:
        buf = self.buffers.setdefault((i, j), [])
        if len(buf) >= self.cfg.buffer_cap:
            buf.pop(0)
        buf.append(bid)
        self.channels.add((i, j))

    def _tick(self, i: int) -> None:
        self._event(TICK, i)
        cfg = self.cfg
        if i in self.byz:
            self._byz_tick(i)
            return
        v, p = self.automata[i].state()
        bid = self._new_bid(i, Datagram(i, v, p))
        self.latest[i] = bid
        for j in range(self.n):
            if j == i or not self.alive[j] or j in self.byz:
                continue
            if cfg.policy == "adversarial" or self.rng.random() < cfg.drop:
                continue
            self._enqueue(i, j, bid)

    def _byz_tick(self, i: int) -> None:
        honest_values = tuple(self.automata[h].state()[0] for h in self.honest)
        for j in self.honest:
            if not self.alive[j]:
                continue
            ctx = ByzContext(i, j, self.clock, self.phase_of(j), honest_values, self.n, self.seed)
            out = self.byz[i](ctx)
            if out is None:
                continue
            bid = self._new_bid(i, Datagram(i, out[0], out[1]))
            self._enqueue(i, j, bid)

    def _deliver_bid(self, j: int, bid: int) -> None:
        self._event(DELIVER, j, bid)
        sender = self.payloads[bid].sender
        if (sender, j) in self.last:
            self.last[sender, j] = self.clock
            heapq.heappush(self.deadlines, (self.clock + self.cfg.Delta - self.margin, sender, j))
        a = self.automata[j]
        a.receive(self.payloads[bid])
        self._collect(j)
        self._refresh(j)

    def _deliver_channel(self, key: tuple[int, int]) -> None:
        buf = self.buffers[key]
        k = self.rng.randrange(len(buf))
        bid = buf[k]
        if not self.rng.random() < self.cfg.duplicate:
            buf.pop(k)
            if not buf:
                self.channels.discard(key)
        self._deliver_bid(key[1], bid)

    def _segment(self, i: int) -> None:
        self._event(SEGMENT, i)
        self.automata[i].step()
        self._collect(i)
        self._refresh(i)

    def _crash(self, i: int) -> None:
        self.alive[i] = False
        self.crashes += 1
        self._event(CRASH, i)
        self.trace.crash(i, self.clock)
        self.segments.discard(i)
        for key in list(self.channels):
            if key[1] == i:
                self.channels.discard(key)
                self.buffers.pop(key, None)

    def _forced_due(self) -> tuple[int, int] | None:
        dl = self.deadlines
        while dl and dl[0][0] <= self.clock:
            due, i, j = dl[0]
            if self.last[i, j] + self.cfg.Delta - self.margin != due or not (self.alive[i] and self.alive[j]):
                heapq.heappop(dl)
                continue
            return i, j
        return None

    def step(self) -> None:
        forced = self._forced_due()
        if forced is not None:
            i, j = forced
            bid = self.latest[i]
            if bid < 0:
                raise EngineFault(f"fairness due for {i}->{j} before {i} ever broadcast")
            self.trace.forced.append((self.clock + 1, i, j, bid))
            self._deliver_bid(j, bid)
            return
        while self.ticks and self.ticks[0][0] <= self.clock:
            due, i = heapq.heappop(self.ticks)
            if not self.alive[i]:
                continue
            heapq.heappush(self.ticks, (due + self.cfg.t, i))
            self._tick(i)
            return
        if self.crash_rate and self.crashes < self.max_crashes and self.rng.random() < self.crash_rate:
            cands = [i for i in self.honest if self.alive[i] and not self.automata[i].decided]
            if cands:
                self._crash(self.rng.choice(cands))
                return
        total = len(self.segments) + len(self.channels)
        r = self.rng.randrange(total + 1)
        if r < len(self.segments):
            self._segment(self.segments[r])
        elif r < total:
            self._deliver_channel(self.channels[r - len(self.segments)])
        else:
            self._idle()

    def _idle(self) -> None:
        """Let time pass with nothing happening, up to the next due event."""
        nxt = self.ticks[0][0] if self.ticks else self.clock + 1
        if self.deadlines:
            nxt = min(nxt, self.deadlines[0][0])
        self.clock = max(self.clock + 1, nxt - 1)

    def run(self, budget: int = DEFAULT_EVENT_BUDGET) -> Trace:
        while not self.done():
            if self.clock >= budget:
                self.trace.timeout = True
                break
            self.step()
        self.trace.finish(self)
        return self.trace


def check_fairness(trace: Trace, Delta: int, nodes: Sequence[int]) -> tuple[bool, dict]:
    """Every ordered pair of live ``nodes`` sees a delivery at least every ``Delta``."""
    senders = {bid: rec[0] for bid, rec in trace.broadcasts.items()}
    last: dict[tuple[int, int], int] = {(i, j): 0 for i in nodes for j in nodes if i != j}
    end = trace.end_time
    for time, kind, node, bid in trace.events:
        if kind != DELIVER:
            continue
        key = (senders[bid], node)
        if key in last:
            stop = min(time, trace.crashed.get(key[0], time), trace.crashed.get(key[1], time))
            if stop - last[key] > Delta:
                return False, {"pair": key, "gap": time - last[key]}
            last[key] = time
    for (i, j), t in last.items():
        stop = min(end, trace.crashed.get(i, end), trace.crashed.get(j, end))
        if stop - t > Delta:
            return False, {"pair": (i, j), "gap": stop - t}
    return True, {}


__all__ = [
    "ByzContext", "ByzStrategy", "Datagram", "LossyConfig", "LossyEngine",
    "check_fairness", "default_lossy", "min_delta", "spare_slots", "CRASH", "DELIVER", "SEGMENT", "TICK",
]
