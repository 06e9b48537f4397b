"""Schedulers for the MAC engine.

Adversaries only ever see a :class:`RedactedView`: event skeletons, the
sender and per-sender sequence number of a broadcast, and liveness. They
never see payloads, so COIN and DUMMY broadcasts look the same to them.
"""

from __future__ import annotations

import random

from .engine import ACK, CRASH, DELIVER, SEGMENT, Event


class RedactedView:
    __slots__ = ("_e",)

    def __init__(self, engine) -> None:
        self._e = engine

    @property
    def n(self) -> int:
        return self._e.n

    @property
    def clock(self) -> int:
        return self._e.clock

    @property
    def segments(self):
        return self._e.segments

    @property
    def deliveries(self):
        return self._e.deliveries

    @property
    def acks(self):
        return self._e.acks

    def enabled(self) -> list[Event]:
        return self._e.enabled_events()

    def crashable(self) -> list[int]:
        return self._e.crashable()

    def sender(self, bid: int) -> int:
        return self._e.sender_of(bid)

    def seq(self, bid: int) -> int:
        return self._e.seq_of(bid)


class Adversary:
    """Base scheduler. Subclasses implement :meth:`pick`."""

    name = "base"

    def __init__(self, seed: int = 0, crash_rate: float = 0.0, max_crashes: int | None = None) -> None:
        self.seed = seed
        self.rng = random.Random(seed)
        self.crash_rate = crash_rate
        self.max_crashes = max_crashes
        self.crashes = 0
        self.view: RedactedView | None = None

    def attach(self, engine) -> None:
        self.view = RedactedView(engine)

    def choose(self, engine) -> Event:
        view = self.view
        if self.crash_rate and (self.max_crashes is None or self.crashes < self.max_crashes):
            if self.rng.random() < self.crash_rate:
                cands = view.crashable()
                if cands:
                    self.crashes += 1
                    return Event(CRASH, self.rng.choice(cands))
        ev = self.pick(view)
        if ev is None:
            # nothing but crashes left
            self.crashes += 1
            return Event(CRASH, self.rng.choice(view.crashable()))
        return ev

    def pick(self, view: RedactedView) -> Event | None:  # pragma: no cover - abstract
        raise NotImplementedError

    def crash_subset(self, rec, candidates: list[int]) -> set[int]:
        """Receivers that still get a crashed sender's in-flight message."""
        return {j for j in candidates if self.rng.random() < 0.5}


class RandomAdversary(Adversary):
    """Uniform choice over every enabled non-crash event."""

    name = "random"

    def pick(self, view):
        segs, dels, acks = view.segments, view.deliveries, view.acks
        total = len(segs) + len(dels) + len(acks)
        if total == 0:
            return None
        r = self.rng.randrange(total)
        if r < len(segs):
            return segs[r]
        r -= len(segs)
        if r < len(dels):
            return dels[r]
        return acks[r - len(dels)]


class LockstepAdversary(Adversary):
    """Segments first (lowest node), then deliveries in broadcast order, then acks."""

    name = "lockstep"

    def pick(self, view):
        if view.segments:
            return min(view.segments)
        if view.deliveries:
            return min(view.deliveries, key=lambda e: (e.bid, e.node))
        if view.acks:
            return min(view.acks, key=lambda e: e.bid)
        return None

    def crash_subset(self, rec, candidates):
        return set(candidates[: len(candidates) // 2])


class LaggardAdversary(RandomAdversary):
    """Random, but starves one victim node while anything else can move."""

    name = "laggard"

    def attach(self, engine) -> None:
        super().attach(engine)
        self.victim = self.rng.randrange(engine.n)

    def pick(self, view):
        v = self.victim
        others = [e for e in view.segments if e.node != v]
        others += [e for e in view.deliveries if e.node != v and view.sender(e.bid) != v]
        others += [e for e in view.acks if e.node != v]
        if others and self.rng.random() < 0.9:
            return self.rng.choice(others)
        return super().pick(view)


class FifoAdversary(RandomAdversary):
    """Random node interleaving but each receiver gets messages in send order."""

    name = "fifo"

    def pick(self, view):
        if view.deliveries and self.rng.random() < 0.5:
            return min(view.deliveries, key=lambda e: (e.bid, e.node))
        return super().pick(view)


ADVERSARIES = {
    "random": RandomAdversary,
    "lockstep": LockstepAdversary,
    "laggard": LaggardAdversary,
    "fifo": FifoAdversary,
}


def make_adversary(name: str, seed: int = 0, crash_rate: float = 0.0, max_crashes: int | None = None) -> Adversary:
    try:
        cls = ADVERSARIES[name]
    except KeyError:
        raise ValueError(f"unknown adversary {name!r}; choose from {sorted(ADVERSARIES)}") from None
    return cls(seed=seed, crash_rate=crash_rate, max_crashes=max_crashes)
