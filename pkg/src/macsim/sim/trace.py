"""Run traces and their JSON-lines rendering."""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any, Iterable, Iterator

from ..dyadic import Dyadic


def render(obj: Any) -> Any:
    """JSON-safe rendering; exact rationals become ``num/2^exp`` strings."""
    if isinstance(obj, Dyadic):
        return str(obj)
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return repr(obj)
    if hasattr(obj, "_asdict"):
        d = {"type": type(obj).__name__}
        d.update({k: render(v) for k, v in obj._asdict().items()})
        return d
    if isinstance(obj, dict):
        return {str(k): render(v) for k, v in sorted(obj.items(), key=lambda kv: repr(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [render(x) for x in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted((render(x) for x in obj), key=repr)
    return repr(obj)


def payload_phase(payload: Any) -> int | None:
    p = getattr(payload, "phase", None)
    return p if isinstance(p, int) else None


class Trace:
    """Ordered log of one run.

    ``events`` holds ``(time, kind, node, bid)`` tuples; ``broadcasts`` maps a
    broadcast id to ``[sender, seq, payload, submit_time, ack_time]``;
    ``notes`` holds ``(time, node, note)`` items written by the automata.
    """

    def __init__(self, n: int, meta: dict | None = None, record_events: bool = True) -> None:
        self.n = n
        self.meta = dict(meta or {})
        self.record_events = record_events
        self.events: list[tuple] = []
        self.broadcasts: dict[int, list] = {}
        self.notes: list[tuple] = []
        self.outputs: dict[int, Any] = {}
        self.output_time: dict[int, int] = {}
        self.crashed: dict[int, int] = {}
        self.timeout = False
        self.end_time = 0
        self.forced: list[tuple] = []

    # recording ----------------------------------------------------------

    def event(self, time: int, kind: str, node: int, bid: int = -1) -> None:
        if self.record_events:
            self.events.append((time, kind, node, bid))

    def broadcast(self, bid: int, sender: int, seq: int, payload: Any, time: int) -> None:
        self.broadcasts[bid] = [sender, seq, payload, time, None]

    def acked(self, bid: int, time: int) -> None:
        self.broadcasts[bid][4] = time

    def notes_from(self, time: int, node: int, items: Iterable[tuple]) -> None:
        for it in items:
            self.notes.append((time, node, it))

    def output(self, node: int, value: Any, time: int) -> None:
        self.outputs[node] = value
        self.output_time[node] = time

    def crash(self, node: int, time: int) -> None:
        self.crashed[node] = time

    def finish(self, engine) -> None:
        self.end_time = engine.clock

    def clone(self) -> "Trace":
        c = Trace.__new__(Trace)
        c.__dict__.update(self.__dict__)
        c.events = list(self.events)
        c.broadcasts = {b: list(r) for b, r in self.broadcasts.items()}
        c.notes = list(self.notes)
        c.outputs = dict(self.outputs)
        c.output_time = dict(self.output_time)
        c.crashed = dict(self.crashed)
        c.forced = list(self.forced)
        return c

    # queries ------------------------------------------------------------

    @property
    def correct(self) -> list[int]:
        return [i for i in range(self.n) if i not in self.crashed]

    def notes_of(self, tag: str) -> Iterator[tuple]:
        """Yield ``(time, node, *rest)`` for every note whose first item is ``tag``."""
        for time, node, it in self.notes:
            if it[0] == tag:
                yield (time, node) + tuple(it[1:])

    # export -------------------------------------------------------------

    def records(self) -> Iterator[dict]:
        for time, kind, node, bid in self.events:
            payload = phase = None
            if bid >= 0:
                payload = self.broadcasts[bid][2]
                phase = payload_phase(payload)
                payload = render(payload)
            yield {"time": time, "kind": kind, "node": node, "bid": bid if bid >= 0 else None,
                   "payload": payload, "phase": phase}

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.records()]
        summary = {
            "kind": "summary",
            "meta": render(self.meta),
            "outputs": {str(k): render(v) for k, v in sorted(self.outputs.items())},
            "crashed": {str(k): v for k, v in sorted(self.crashed.items())},
            "timeout": self.timeout,
            "end_time": self.end_time,
        }
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"
