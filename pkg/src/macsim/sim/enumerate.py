"""Exhaustive schedule enumeration for tiny systems.

Depth-first search over every enabled event, including crashes and every
delivery subset a crashing sender can leave behind. States are merged when
their engine fingerprint and the order of everything the automata noted so
far agree, since no checker can tell such prefixes apart.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable

from .engine import CRASH, MacEngine


def _subsets(items: list[int]):
    for r in range(len(items) + 1):
        yield from (set(c) for c in combinations(items, r))


def fingerprint(engine: MacEngine) -> tuple:
    nodes = []
    for s in engine.nodes:
        a = s.automaton
        state = tuple(sorted((k, repr(v)) for k, v in vars(a).items() if k != "notes"))
        nodes.append((state, s.alive, s.locked, tuple(map(repr, s.inbox)), s.waiting >= 0, s.done))
    inflight = tuple(sorted(
        (r.sender, r.seq, repr(r.payload), tuple(sorted(r.pending)), r.acked)
        for r in engine.inflight.values()
    ))
    notes = tuple((node, repr(it)) for _, node, it in engine.trace.notes)
    return tuple(nodes), inflight, notes, engine.crashes


def _crash_branches(engine: MacEngine, node: int):
    """Every way the adversary may resolve ``node`` crashing."""
    recs = [r for r in engine.inflight.values() if r.sender == node]
    if not recs:
        yield None
        return
    # one keep-set per in-flight broadcast of the crashing node
    options = [list(_subsets(sorted(r.pending - {node}))) for r in recs]

    def rec_product(i, acc):
        if i == len(recs):
            yield dict(acc)
            return
        for s in options[i]:
            acc[recs[i].bid] = s
            yield from rec_product(i + 1, acc)

    for choice in rec_product(0, {}):
        yield lambda rec, cands, choice=choice: choice.get(rec.bid, set(cands))


def explore(
    make: Callable[[], MacEngine],
    visit: Callable[[MacEngine, bool], None],
    depth: int,
    *,
    merge: bool = True,
) -> dict:
    """Call ``visit(engine, complete)`` on every maximal schedule prefix.

    ``complete`` is True when every live node finished within ``depth``
    events. Returns search statistics.
    """
    stats = {"leaves": 0, "complete": 0, "states": 0, "merged": 0}
    seen: set = set()

    def dfs(e: MacEngine, d: int) -> None:
        stats["states"] += 1
        if merge:
            key = (d, fingerprint(e))
            if key in seen:
                stats["merged"] += 1
                return
            seen.add(key)
        done = e.finished()
        evs = e.enabled_events()
        if done or d >= depth or not evs:
            stats["leaves"] += 1
            stats["complete"] += done
            visit(e, done)
            return
        for ev in evs:
            if ev.kind == CRASH:
                for keep in _crash_branches(e, ev.node):
                    c = e.clone()
                    c.apply(ev, crash_keep=keep)
                    dfs(c, d + 1)
            else:
                c = e.clone()
                c.apply(ev)
                dfs(c, d + 1)

    dfs(make(), 0)
    return stats
