"""Node automata hosted by the engines.

An automaton is a resumable state machine. ``step()`` runs the main thread
from its program counter up to the next broadcast point or lock boundary
and returns the action that ended the segment. ``receive()`` is the
background message handler; the engine calls it atomically, never while
the main thread holds the lock.

Automata do not get a node identifier. Anything the checkers need is
written to ``self.notes`` and collected by the engine, which stamps it
with the time and the engine-side node label.
"""

from __future__ import annotations

import copy
from typing import Any, NamedTuple


class Broadcast(NamedTuple):
    payload: Any


class _Marker:
    __slots__ = ("name",)

    def __init__(self, name: str) -> None:
        self.name = name

    def __repr__(self) -> str:
        return self.name


LOCK = _Marker("LOCK")
UNLOCK = _Marker("UNLOCK")
DONE = _Marker("DONE")

_COPY_TYPES = (list, dict, set)


class Automaton:
    """Base class: bookkeeping shared by every protocol automaton."""

    def __init__(self) -> None:
        self.pc = 0
        self.notes: list[tuple] = []
        self.output: Any = None
        self.decided = False

    def step(self):  # pragma: no cover - abstract
        raise NotImplementedError

    def receive(self, msg) -> None:  # pragma: no cover - abstract
        raise NotImplementedError

    def note(self, *item) -> None:
        self.notes.append(item)

    def decide(self, value, **extra) -> Any:
        self.output = value
        self.decided = True
        self.notes.append(("output", value, extra))
        return DONE

    def clone(self) -> "Automaton":
        c = copy.copy(self)
        for k, v in vars(c).items():
            if type(v) in _COPY_TYPES:
                setattr(c, k, type(v)(v))
            elif hasattr(v, "clone"):
                setattr(c, k, v.clone())
        return c
