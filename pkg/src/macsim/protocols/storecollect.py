"""Store-collect over the abstract MAC layer, and a regularity checker.

A store merges the new value into the local view and broadcasts the
result; a collect broadcasts the local view and returns it once the
broadcast is acknowledged. Every received view is merged into the local
one. Correctness rests entirely on the acknowledgement: once it fires,
every live node already holds the broadcast view.
"""

from __future__ import annotations

import json
import random
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from ..checkers import Verdict
from ..sim.automaton import DONE, Automaton, Broadcast
from ..sim.trace import render


class ViewConflict(ValueError):
    """Two different values carry the same (node, seq) stamp."""


class View:
    """Immutable map ``node -> (value, seq)``; merge keeps the newer entry."""

    __slots__ = ("entries", "_key")

    def __init__(self, entries: Mapping[int, tuple[Any, int]] | None = None) -> None:
        self.entries = dict(entries or {})
        self._key = tuple(sorted(self.entries.items(), key=lambda kv: kv[0]))

    def get(self, node: int):
        return self.entries.get(node)

    def with_entry(self, node: int, value: Any, seq: int) -> "View":
        d = dict(self.entries)
        d[node] = (value, seq)
        return View(d)

    def merge(self, other: "View") -> "View":
        return merge_views(self, other)

    def precedes(self, other: "View") -> bool:
        """``self ⪯ other``: ``other`` is at least as recent at every node."""
        for j, (_, s) in self.entries.items():
            e = other.entries.get(j)
            if e is None or e[1] < s:
                return False
        return True

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, View) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return "View(" + ", ".join(f"{j}:{v!r}@{s}" for j, (v, s) in self._key) + ")"

    def to_json(self) -> dict:
        return {str(j): [render(v), s] for j, (v, s) in self._key}

    @classmethod
    def from_json(cls, d: Mapping) -> "View":
        return cls({int(j): (v, s) for j, (v, s) in d.items()})


EMPTY_VIEW = View()


def merge_views(a: View, b: View) -> View:
    if not b.entries:
        return a
    if not a.entries:
        return b
    out = dict(a.entries)
    for j, (v, s) in b.entries.items():
        mine = out.get(j)
        if mine is None or mine[1] < s:
            out[j] = (v, s)
        elif mine[1] == s and mine[0] != v:
            raise ViewConflict(f"node {j} has values {mine[0]!r} and {v!r} at seq {s}")
    return View(out)


class StoreMsg(NamedTuple):
    view: View


class StoreCollect(Automaton):
    """Runs a fixed workload of ``("store", v)`` / ``("collect",)`` operations.

    The view is keyed by writer, so unlike the agreement protocols this
    automaton does need to know its own label ``ident``.
    """

    def __init__(self, ident: int, ops: Sequence[tuple]) -> None:
        super().__init__()
        self.ident = ident
        self.ops = list(ops)
        self.view = EMPTY_VIEW
        self.next_op = 0
        self.pending: tuple | None = None
        self.stores = 0

    def step(self):
        if self.pending is not None:
            kind, result = self.pending
            self.note("resp", kind, result)
            self.pending = None
        if self.next_op >= len(self.ops):
            return DONE
        op = self.ops[self.next_op]
        self.next_op += 1
        if op[0] == "store":
            value = op[1]
            self.note("inv", "store", (value, self.stores))
            current = self.view.with_entry(self.ident, value, self.stores)
            self.stores += 1
            self.pending = ("store", None)
        elif op[0] == "collect":
            self.note("inv", "collect", None)
            current = self.view
            self.pending = ("collect", current)
        else:
            raise ValueError(f"unknown operation {op!r}")
        return Broadcast(StoreMsg(current))

    def receive(self, msg: StoreMsg) -> None:
        self.view = merge_views(self.view, msg.view)


def random_workload(n: int, ops_per_node: int, rng: random.Random, store_bias: float = 0.5) -> list[list[tuple]]:
    work = []
    for i in range(n):
        ops = []
        for k in range(ops_per_node):
            if rng.random() < store_bias:
                ops.append(("store", f"v{i}.{k}"))
            else:
                ops.append(("collect",))
        work.append(ops)
    return work


# --------------------------------------------------------------- histories


class HistoryEvent(NamedTuple):
    time: int
    node: int
    op: str
    edge: str
    value: Any = None  # (value, seq) for a store inv, View for a collect resp


def extract_history(trace) -> list[HistoryEvent]:
    """Invocation/response edges in trace order."""
    out = []
    for time, node, it in trace.notes:
        tag = it[0]
        if tag == "inv":
            out.append(HistoryEvent(time, node, it[1], "inv", it[2]))
        elif tag == "resp":
            out.append(HistoryEvent(time, node, it[1], "resp", it[2]))
    return out


def history_to_jsonl(history: Iterable[HistoryEvent]) -> str:
    lines = []
    for h in history:
        val = h.value.to_json() if isinstance(h.value, View) else render(h.value)
        lines.append(json.dumps({"time": h.time, "node": h.node, "op": h.op, "edge": h.edge, "value": val}))
    return "\n".join(lines) + ("\n" if lines else "")


def history_from_jsonl(text: str) -> list[HistoryEvent]:
    out = []
    for k, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            op, edge = d["op"], d["edge"]
            val = d.get("value")
            if op == "collect" and edge == "resp":
                val = View.from_json(val)
            elif op == "store" and edge == "inv":
                val = (val[0], int(val[1]))
            out.append(HistoryEvent(int(d["time"]), int(d["node"]), op, edge, val))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValueError(f"line {k + 1}: malformed history event ({exc})") from None
    return out


class _Op:
    __slots__ = ("node", "kind", "inv", "resp", "value", "view")

    def __init__(self, node, kind, inv, value):
        self.node = node
        self.kind = kind
        self.inv = inv
        self.resp = None
        self.value = value
        self.view = None

    def precedes(self, other: "_Op") -> bool:
        return self.resp is not None and self.resp < other.inv


def _pair_ops(history: Sequence[HistoryEvent]) -> list[_Op]:
    open_ops: dict[int, _Op] = {}
    ops = []
    for pos, h in enumerate(history):
        if h.op not in ("store", "collect") or h.edge not in ("inv", "resp"):
            raise ValueError(f"event {pos}: unknown op/edge {h.op}/{h.edge}")
        if h.edge == "inv":
            if h.node in open_ops:
                raise ValueError(f"event {pos}: node {h.node} has two pending operations")
            op = _Op(h.node, h.op, pos, h.value)
            open_ops[h.node] = op
            ops.append(op)
        else:
            op = open_ops.pop(h.node, None)
            if op is None or op.kind != h.op:
                raise ValueError(f"event {pos}: response without matching invocation")
            op.resp = pos
            if h.op == "collect":
                if not isinstance(h.value, View):
                    raise ValueError(f"event {pos}: collect response without a view")
                op.view = h.value
    return ops


def check_regularity(history: Sequence[HistoryEvent]) -> Verdict:
    """Freshness and view monotonicity of every completed collect.

    Positions in ``history`` give the real-time order; an operation
    precedes another when its response comes before the other's invocation.
    """
    ops = _pair_ops(history)
    stores: dict[int, dict[int, _Op]] = {}
    for op in ops:
        if op.kind == "store":
            stores.setdefault(op.node, {})[op.value[1]] = op
    collects = [op for op in ops if op.kind == "collect" and op.resp is not None]

    for c in collects:
        for j, by_seq in stores.items():
            entry = c.view.get(j)
            if entry is None:
                for s in by_seq.values():
                    if s.precedes(c):
                        return Verdict.fail("regularity-I", collect=(c.node, c.inv), missing_store=(j, s.inv),
                                            reason="collect misses a store that precedes it")
                continue
            value, seq = entry
            w = by_seq.get(seq)
            if w is None or w.value[0] != value:
                return Verdict.fail("regularity-I", collect=(c.node, c.inv), entry=(j, value, seq),
                                    reason="returned value was never stored")
            if c.precedes(w):
                return Verdict.fail("regularity-I", collect=(c.node, c.inv), store=(j, w.inv),
                                    reason="returned value is stored after the collect")
            for s in by_seq.values():
                if s.value[1] > seq and s.precedes(c):
                    return Verdict.fail("regularity-I", collect=(c.node, c.inv), stale=(j, seq),
                                        newer_store=(j, s.inv), reason="a newer store precedes the collect")
        for entry_node, entry in c.view.entries.items():
            if entry_node not in stores:
                return Verdict.fail("regularity-I", collect=(c.node, c.inv), entry=(entry_node,) + tuple(entry),
                                    reason="returned value was never stored")

    order = sorted(collects, key=lambda o: o.resp)
    for a in order:
        for b in collects:
            if a.precedes(b) and not a.view.precedes(b.view):
                return Verdict.fail("regularity-II", first=(a.node, a.inv), second=(b.node, b.inv),
                                    reason="later collect returned an older view")
    return Verdict.ok("regularity")
