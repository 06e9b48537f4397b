"""Approximate agreement over fair-lossy channels.

``SmallAc`` tolerates crashes with ``n >= 2f+1``: it keeps the extremes of
the distinct phase-p states it has heard, moves to their midpoint once
``n-f`` senders (itself included) are counted, and jumps to any higher
phase it hears of. ``SmallBac`` tolerates ``f`` Byzantine nodes with
``n >= 5f+1``: it counts senders in phase ``>= p``, keeps only the ``f+1``
lowest and highest values it was given, and averages the inner ends.

Both write ``("phase", p, v, how, heard)`` on entering a phase; ``heard``
lists the senders counted for a move. The remaining functions are
checkers over those notes.
"""

from __future__ import annotations

import bisect
import math
import random
from fractions import Fraction
from typing import Any, NamedTuple, Sequence

from ..dyadic import Dyadic, average
from ..sim.lossy import ByzContext, Datagram
from .approximate import _check_input, contraction_phases, halving_phases


def check_resilience(protocol: str, n: int, f: int) -> None:
    if f < 0 or n < 1:
        raise ValueError("need n >= 1 and f >= 0")
    if protocol == "small-ac" and n < 2 * f + 1:
        raise ValueError(f"SmallAC needs n >= 2f+1 (got n={n}, f={f})")
    if protocol == "small-bac" and n < 5 * f + 1:
        raise ValueError(f"SmallBAC needs n >= 5f+1 (got n={n}, f={f})")


def small_ac_phases(eps) -> int:
    return halving_phases(eps)


def small_bac_phases(eps, n: int) -> int:
    return contraction_phases(eps, n)


class SmallAc:
    """Crash-tolerant averaging with jumps; the handler never blocks."""

    def __init__(self, ident: int, x, n: int, f: int, p_end: int) -> None:
        check_resilience("small-ac", n, f)
        self.ident, self.n, self.f = ident, n, f
        self.notes: list[tuple] = []
        self.output: Any = None
        self.decided = False
        self.p_end = p_end
        self.v = _check_input(x)
        self.p = 0
        self.p_next = 0
        self.v_next = self.v
        self.how = "init"
        self._reset()
        self.notes.append(("phase", 0, self.v, "init", ()))
        self._maybe_decide()

    def _reset(self) -> None:
        self.vmin = self.vmax = self.v
        self.heard = {self.ident}

    def _maybe_decide(self) -> None:
        if self.p >= self.p_end and not self.decided:
            self.output = self.v
            self.decided = True
            self.notes.append(("output", self.v, {"phase": self.p}))

    def state(self) -> tuple[Dyadic, int]:
        return self.v, self.p

    def pending(self) -> bool:
        return not self.decided and self.p_next > self.p

    def step(self) -> None:
        heard = tuple(sorted(self.heard)) if self.how == "move" else ()
        self.v = self.v_next
        self.p = self.p_next
        self.notes.append(("phase", self.p, self.v, self.how, heard))
        self._reset()
        self._maybe_decide()

    def receive(self, msg: Datagram) -> None:
        if self.decided:
            return
        j, v, p = msg
        if p > self.p:
            self.v_next, self.p_next, self.how = v, p, "jump"
        elif p == self.p and j not in self.heard:
            self.heard.add(j)
            if v < self.vmin:
                self.vmin = v
            elif v > self.vmax:
                self.vmax = v
            if len(self.heard) >= self.n - self.f:
                self.v_next = average(self.vmin, self.vmax)
                self.p_next = self.p + 1
                self.how = "move"


class TrimStore(NamedTuple):
    """The ``f+1`` lowest and ``f+1`` highest values stored so far, each sorted."""

    f: int
    low: tuple = ()
    high: tuple = ()


def trim_store(ts: TrimStore, v) -> TrimStore:
    """Store one value: insert while short, else evict the inner extreme."""
    low, high = list(ts.low), list(ts.high)
    if len(low) <= ts.f:
        bisect.insort(low, v)
    elif v < low[-1]:
        low.pop()
        bisect.insort(low, v)
    if len(high) <= ts.f:
        bisect.insort(high, v)
    elif v > high[0]:
        high.pop(0)
        bisect.insort(high, v)
    return TrimStore(ts.f, tuple(low), tuple(high))


class SmallBac:
    """Byzantine-tolerant averaging; the whole update runs in the handler.

    With ``include_self_value`` the node stores its own phase state next
    to the received ones. Otherwise its own value only counts towards the
    ``n-f`` threshold.
    """

    def __init__(self, ident: int, x, n: int, f: int, p_end: int, *, include_self_value: bool = True) -> None:
        check_resilience("small-bac", n, f)
        self.ident, self.n, self.f = ident, n, f
        self.self_value = include_self_value
        self.notes: list[tuple] = []
        self.output: Any = None
        self.decided = False
        self.p_end = p_end
        self.v = _check_input(x)
        self.p = 0
        self._reset()
        self.notes.append(("phase", 0, self.v, "init", ()))
        self._maybe_decide()

    def _reset(self) -> None:
        self.heard = {self.ident}
        self.store = TrimStore(self.f)
        if self.self_value:
            self.store = trim_store(self.store, self.v)

    def _maybe_decide(self) -> None:
        if self.p >= self.p_end and not self.decided:
            self.output = self.v
            self.decided = True
            self.notes.append(("output", self.v, {"phase": self.p}))

    def state(self) -> tuple[Dyadic, int]:
        return self.v, self.p

    def pending(self) -> bool:
        return False

    def step(self) -> None:  # pragma: no cover - never pending
        raise AssertionError("SmallBac has no main-thread work")

    def receive(self, msg: Datagram) -> None:
        if self.decided:
            return
        j, v, p = msg
        if p >= self.p and j not in self.heard:
            self.heard.add(j)
            self.store = trim_store(self.store, v)
        if len(self.heard) >= self.n - self.f:
            heard = tuple(sorted(self.heard))
            self.v = average(self.store.low[-1], self.store.high[0])
            self.p += 1
            self.notes.append(("phase", self.p, self.v, "move", heard))
            self._reset()
            self._maybe_decide()


# ------------------------------------------------------- Byzantine strategies

_BIG = Dyadic(10**6)


def _extremes(ctx: ByzContext):
    v = _BIG if (ctx.receiver + ctx.tick) % 2 else -_BIG
    return v, ctx.receiver_phase + 1


def _equivocate(ctx: ByzContext):
    lo, hi = min(ctx.honest_values), max(ctx.honest_values)
    spread = hi - lo
    v = lo - spread if ctx.receiver < ctx.n // 2 else hi + spread
    return v, ctx.receiver_phase


def _mimic(ctx: ByzContext):
    base = ctx.honest_values[ctx.rng.randrange(len(ctx.honest_values))]
    jitter = Dyadic(ctx.rng.randrange(-256, 257), 16)
    return base + jitter, ctx.receiver_phase


def _silent(ctx: ByzContext):
    return None


def _random(ctx: ByzContext):
    v = Dyadic(ctx.rng.randrange(-2 << 16, 3 << 16), 16)
    return v, ctx.receiver_phase + ctx.rng.randrange(3)


BYZ_STRATEGIES = {
    "extremes": _extremes,
    "equivocate": _equivocate,
    "mimic": _mimic,
    "silent": _silent,
    "random": _random,
}


def byz_strategy_catalog() -> dict:
    return dict(BYZ_STRATEGIES)


def get_strategy(name: str):
    try:
        return BYZ_STRATEGIES[name]
    except KeyError:
        raise ValueError(f"unknown Byzantine strategy {name!r}; choose from {sorted(BYZ_STRATEGIES)}") from None


# ----------------------------------------------------------------- analysis


class LossyPhase(NamedTuple):
    p: int
    order: list  # (node, v) in the order nodes entered the phase
    movers: dict  # node -> (v, heard)
    jumpers: dict

    @property
    def states(self) -> dict:
        return dict(self.order)

    @property
    def values(self) -> list:
        return [v for _, v in self.order]

    @property
    def range(self):
        vals = self.values
        return max(vals) - min(vals)


def lossy_phases(trace, nodes: Sequence[int] | None = None) -> list[LossyPhase]:
    """Phase table built from the phase notes of ``nodes`` (default: all)."""
    keep = None if nodes is None else set(nodes)
    rows: dict[int, LossyPhase] = {}
    for _, node, it in trace.notes:
        if it[0] != "phase" or (keep is not None and node not in keep):
            continue
        p, v, how, heard = it[1], it[2], it[3], it[4]
        row = rows.setdefault(p, LossyPhase(p, [], {}, {}))
        if any(m == node for m, _ in row.order):
            raise ValueError(f"node {node} entered phase {p} twice")
        row.order.append((node, v))
        if how == "move":
            row.movers[node] = (v, heard)
        elif how == "jump":
            row.jumpers[node] = v
    return [rows[p] for p in sorted(rows)]


def check_lossy_halving(rows) -> tuple[bool, dict]:
    r0 = rows[0].range
    for row in rows:
        if row.range * (1 << row.p) > r0:
            return False, {"phase": row.p, "range": str(row.range), "initial": str(r0)}
    return True, {}


def median_bounds(values) -> tuple:
    """Lower and upper median of a nonempty multiset."""
    w = sorted(values)
    m = len(w)
    return w[(m - 1) // 2], w[m // 2]


def mover_interval(values) -> tuple:
    """``[(min + median)/2, (max + median)/2]``, using the median on the safe side.

    For even sizes the lower end uses the upper median and the upper end
    the lower median, which is the tightest form the counting argument gives.
    """
    med_lo, med_hi = median_bounds(values)
    return average(min(values), med_hi), average(max(values), med_lo)


def check_small_ac_movers(rows) -> tuple[bool, dict]:
    by_p = {r.p: r for r in rows}
    for row in rows:
        nxt = by_p.get(row.p + 1)
        if nxt is None:
            continue
        lo, hi = mover_interval(row.values)
        for j, (v, _) in nxt.movers.items():
            if not lo <= v <= hi:
                return False, {"phase": row.p, "node": j, "value": str(v), "low": str(lo), "high": str(hi)}
    return True, {}


def check_common_value(rows, n: int, f: int) -> tuple[bool, dict]:
    """Each mover averages the extremes of ``>= n-f`` phase states it heard,
    and any two movers out of the same phase heard a common sender."""
    by_p = {r.p: r for r in rows}
    for row in rows:
        nxt = by_p.get(row.p + 1)
        if nxt is None:
            continue
        states = row.states
        movers = list(nxt.movers.items())
        for j, (v, heard) in movers:
            if len(heard) < n - f or any(s not in states for s in heard):
                return False, {"phase": row.p, "node": j, "heard": heard}
            vals = [states[s] for s in heard]
            if v != average(min(vals), max(vals)):
                return False, {"phase": row.p, "node": j, "value": str(v), "reason": "not the midpoint of heard states"}
        for a in range(len(movers)):
            for b in range(a + 1, len(movers)):
                if not set(movers[a][1][1]) & set(movers[b][1][1]):
                    return False, {"phase": row.p, "nodes": (movers[a][0], movers[b][0]), "reason": "no common sender"}
    return True, {}


def check_jump_sources(rows) -> tuple[bool, dict]:
    """Every jumped-to state is a state some node held in that phase."""
    for row in rows:
        held = set(row.values)
        for j, v in row.jumpers.items():
            if v not in held:
                return False, {"phase": row.p, "node": j, "value": str(v)}
    return True, {}


def check_bac_contraction(rows, n: int) -> tuple[bool, dict]:
    """range(V[p+1]) <= (1 - 2^-n) range(V[p]) for consecutive honest phases."""
    q = 1 - Fraction(1, 1 << n)
    for a, b in zip(rows, rows[1:]):
        if b.p != a.p + 1:
            continue
        if b.range.to_fraction() > q * a.range.to_fraction():
            return False, {"phase": b.p, "range": str(b.range), "previous": str(a.range)}
    return True, {}


def ab_bounds(w1, w2f1, wh, k: int) -> tuple:
    """Closed forms ``a_k = w1 + 2^-k (w_{2f+1} - w1)`` and ``A_k = wh + 2^-k (w_{2f+1} - wh)``."""
    return w1 + (w2f1 - w1).shift(k), wh + (w2f1 - wh).shift(k)


def ab_recursion(w1, w2f1, wh, k: int) -> tuple:
    a = A = w2f1
    for _ in range(k):
        a, A = average(a, w1), average(A, wh)
    return a, A


def ab_envelope(rows, p: int, f: int) -> tuple[bool, dict]:
    """Check that the k-th honest node to enter phase p+1 lies in ``[a_k, A_k]``."""
    by_p = {r.p: r for r in rows}
    row, nxt = by_p.get(p), by_p.get(p + 1)
    if row is None:
        raise ValueError(f"no phase {p} in the trace")
    w = sorted(row.values)
    if len(w) < 2 * f + 1:
        raise ValueError(f"need at least 2f+1 = {2 * f + 1} honest phase-{p} states, have {len(w)}")
    if nxt is None:
        return True, {}
    w1, w2f1, wh = w[0], w[2 * f], w[-1]
    for k, (node, v) in enumerate(nxt.order, start=1):
        a, A = ab_bounds(w1, w2f1, wh, k)
        if not a <= v <= A:
            return False, {"phase": p, "k": k, "node": node, "value": str(v), "a": str(a), "A": str(A)}
    return True, {}


def check_envelopes(rows, f: int) -> tuple[bool, dict]:
    for row in rows[:-1]:
        ok, wit = ab_envelope(rows, row.p, f)
        if not ok:
            return ok, wit
    return True, {}


def truncated_epsilon(n: int, phases: int) -> Fraction:
    """The epsilon whose SmallBAC phase count is exactly ``phases``."""
    return (1 - Fraction(1, 1 << n)) ** phases


# ------------------------------------------------------------------ drivers


def run_small_ac(n: int, f: int, eps, seed: int, *, drop: float = 0.3, inputs=None, crash_rate: float = 0.002,
                 lossy=None, record_events: bool = True, budget: int = 10**6):
    from ..sim.lossy import LossyEngine, default_lossy

    check_resilience("small-ac", n, f)
    rng = random.Random(seed)
    if inputs is None:
        inputs = [Dyadic(rng.randrange(1 << 10), 10) for _ in range(n)]
    p_end = small_ac_phases(eps)
    nodes = [SmallAc(i, inputs[i], n, f, p_end) for i in range(n)]
    cfg = lossy or default_lossy(n, drop)
    eng = LossyEngine(nodes, cfg, seed=seed, max_crashes=f, crash_rate=crash_rate, record_events=record_events,
                      meta={"protocol": "small-ac", "n": n, "f": f, "eps": eps, "seed": seed, "drop": cfg.drop})
    return eng.run(budget), list(inputs)


def run_small_bac(n: int, f: int, eps, seed: int, byz: str = "silent", *, drop: float = 0.3, inputs=None,
                  include_self_value: bool = True, p_end: int | None = None, lossy=None,
                  record_events: bool = True, budget: int = 10**6):
    """One SmallBAC run; the last ``f`` nodes are Byzantine."""
    from ..sim.lossy import LossyEngine, default_lossy

    check_resilience("small-bac", n, f)
    rng = random.Random(seed)
    honest = n - f
    if inputs is None:
        inputs = [Dyadic(rng.randrange(1 << 10), 10) for _ in range(honest)]
    if p_end is None:
        p_end = small_bac_phases(eps, n)
    strategy = get_strategy(byz)
    nodes: list = [SmallBac(i, inputs[i], n, f, p_end, include_self_value=include_self_value)
                   for i in range(honest)]
    nodes += [None] * f
    cfg = lossy or default_lossy(n, drop)
    eng = LossyEngine(nodes, cfg, seed=seed, byzantine={b: strategy for b in range(honest, n)},
                      record_events=record_events,
                      meta={"protocol": "small-bac", "n": n, "f": f, "eps": eps, "seed": seed, "byz": byz,
                            "p_end": p_end, "drop": cfg.drop})
    return eng.run(budget), list(inputs)


__all__ = [
    "BYZ_STRATEGIES", "LossyPhase", "SmallAc", "SmallBac", "TrimStore", "ab_bounds", "ab_envelope",
    "ab_recursion", "byz_strategy_catalog", "check_bac_contraction", "check_common_value", "check_envelopes",
    "check_jump_sources", "check_lossy_halving", "check_resilience", "check_small_ac_movers", "get_strategy",
    "lossy_phases", "median_bounds", "mover_interval", "run_small_ac", "run_small_bac", "small_ac_phases",
    "small_bac_phases", "trim_store", "truncated_epsilon",
]
