"""Approximate agreement over the abstract MAC layer.

``MacAc`` keeps only the extreme states it hears in the current phase and
moves to their midpoint once its own broadcast is acknowledged; a message
from a later phase makes it jump there instead. ``MacAc2`` drops the lock
and the extremes: it folds every same-phase value into its state.

Both record ``("phase", p, v, how)`` whenever they enter a phase, where
``how`` is ``init``, ``move`` or ``jump``; analysis works off those notes.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import NamedTuple

from ..dyadic import Dyadic, average
from ..sim.automaton import LOCK, UNLOCK, Automaton, Broadcast


class State(NamedTuple):
    v: Dyadic
    phase: int


def _check_input(x) -> Dyadic:
    d = Dyadic.of(x)
    if not 0 <= d <= 1:
        raise ValueError(f"input {x} outside [0, 1]")
    return d


def _as_fraction(x) -> Fraction:
    return x.to_fraction() if isinstance(x, Dyadic) else Fraction(x)


def halving_phases(eps) -> int:
    """Smallest p with 2^-p <= eps, i.e. ceil(log2(1/eps))."""
    e = _as_fraction(eps)
    if not 0 < e <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    p = max(0, math.ceil(math.log2(1 / float(e))) - 1)
    while Fraction(1, 1 << p) > e:
        p += 1
    while p > 0 and Fraction(1, 1 << (p - 1)) <= e:
        p -= 1
    return p


def contraction_phases(eps, n: int) -> int:
    """Smallest p with (1 - 2^-n)^p <= eps, i.e. ceil(ln eps / ln(1 - 2^-n))."""
    e = _as_fraction(eps)
    if not 0 < e <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    if e == 1:
        return 0
    q = 1 - Fraction(1, 1 << n)
    p = max(0, math.ceil(math.log(float(e)) / math.log(float(q))) - 1)
    while q**p > e:
        p += 1
    while p > 0 and q ** (p - 1) <= e:
        p -= 1
    return p


class MacAc(Automaton):
    """Lock-protected min/max averaging with phase jumps.

    With ``carry_extremes`` (the default) the extremes always belong to
    phase ``p_next``: a pending jump starts collecting them for its target
    phase (seeded with the copied value) and the phase-start reset is
    skipped after a jump, so values heard before the jump lands are kept
    and a jump registered in the meantime is not overwritten. With
    ``carry_extremes=False`` the phase-start reset is unconditional, which
    can drop the first completer's value and break the mover bound.
    """

    _TOP, _INIT, _BCAST, _AFTER, _JUMP = range(5)

    def __init__(self, x, p_end: int, *, carry_extremes: bool = True) -> None:
        super().__init__()
        self.carry = carry_extremes
        self.jumped = False
        self.v = _check_input(x)
        self.p = 0
        self.p_end = p_end
        self.vmin = self.vmax = self.v
        self.p_next = 0
        self.v_next = self.v
        self.note("phase", 0, self.v, "init")

    def _top(self):
        if self.p >= self.p_end:
            return self.decide(self.v, phase=self.p)
        self.pc = self._INIT
        return LOCK

    def step(self):
        pc = self.pc
        if pc == self._TOP:
            return self._top()
        if pc == self._INIT:
            if not self.carry or not (self.jumped or self.p_next > self.p):
                self.vmin = self.vmax = self.v
                self.p_next = self.p
            self.jumped = False
            self.pc = self._BCAST
            return UNLOCK
        if pc == self._BCAST:
            self.pc = self._AFTER
            return Broadcast(State(self.v, self.p))
        if pc == self._AFTER:
            if self.p_next == self.p:
                self.v = average(self.vmin, self.vmax)
                self.p += 1
                self.note("phase", self.p, self.v, "move")
                return self._top()
            self.pc = self._JUMP
            return LOCK
        if pc == self._JUMP:
            self.v = self.v_next
            self.p = self.p_next
            self.jumped = True
            self.note("phase", self.p, self.v, "jump")
            self.pc = self._TOP
            return UNLOCK
        raise AssertionError(f"bad pc {pc}")

    def receive(self, msg: State) -> None:
        if msg.phase > self.p_next:
            self.p_next = msg.phase
            self.v_next = msg.v
            if self.carry:
                self.vmin = self.vmax = msg.v
        elif msg.phase == self.p_next:
            if msg.v > self.vmax:
                self.vmax = msg.v
            if msg.v < self.vmin:
                self.vmin = msg.v


class MacAc2(Automaton):
    """Lock-free variant; needs an upper bound on n to pick ``p_end``."""

    def __init__(self, x, p_end: int) -> None:
        super().__init__()
        self.v = _check_input(x)
        self.p = 0
        self.p_end = p_end
        self.jump = False
        self.how = "init"

    def step(self):
        if self.pc == 1:
            if self.jump:
                self.how = "jump"
            else:
                self.p += 1
                self.how = "move"
        self.note("phase", self.p, self.v, self.how)
        if self.p >= self.p_end:
            return self.decide(self.v, phase=self.p)
        self.jump = False
        self.pc = 1
        return Broadcast(State(self.v, self.p))

    def receive(self, msg: State) -> None:
        if msg.phase > self.p:
            self.p = msg.phase
            self.v = msg.v
            self.jump = True
            self.note("copied", msg.phase, msg.v)
        elif msg.phase == self.p:
            self.v = average(self.v, msg.v)


# ---------------------------------------------------------------- analysis


class PhaseRow(NamedTuple):
    p: int
    states: dict  # node -> v_i[p]
    movers: dict  # node -> v_i[p] for nodes that moved into p
    jumpers: dict
    i_p: int | None  # first node whose phase-p broadcast was acknowledged

    @property
    def lo(self):
        return min(self.states.values())

    @property
    def hi(self):
        return max(self.states.values())

    @property
    def range(self):
        return self.hi - self.lo


def phase_ranges(trace) -> list[PhaseRow]:
    """Per-phase multisets V[p] with their first completer and move/jump labels."""
    states: dict[int, dict] = {}
    movers: dict[int, dict] = {}
    jumpers: dict[int, dict] = {}
    for _, node, it in trace.notes:
        if it[0] != "phase":
            continue
        p, v, how = it[1], it[2], it[3] if len(it) > 3 else "init"
        if node in states.setdefault(p, {}):
            raise ValueError(f"node {node} entered phase {p} twice")
        states[p][node] = v
        if how == "move":
            movers.setdefault(p, {})[node] = v
        elif how == "jump":
            jumpers.setdefault(p, {})[node] = v
    first: dict[int, tuple[int, int]] = {}
    for sender, _, payload, _, t_ack in trace.broadcasts.values():
        p = getattr(payload, "phase", None)
        if t_ack is None or p is None:
            continue
        if p not in first or t_ack < first[p][0]:
            first[p] = (t_ack, sender)
    rows = []
    for p in sorted(states):
        rows.append(PhaseRow(p, states[p], movers.get(p, {}), jumpers.get(p, {}),
                             first[p][1] if p in first else None))
    return rows


def copied_values(trace) -> dict[int, list]:
    out: dict[int, list] = {}
    for _, node, it in trace.notes:
        if it[0] == "copied":
            out.setdefault(it[1], []).append((node, it[2]))
    return out


def check_halving(rows) -> tuple[bool, dict]:
    """range(V[p]) * 2^p <= range(V[0]) for every recorded phase."""
    r0 = rows[0].range
    for row in rows:
        if row.range * (1 << row.p) > r0:
            return False, {"phase": row.p, "range": str(row.range), "initial": str(r0)}
    return True, {}


def check_contraction(rows, n: int) -> tuple[bool, dict]:
    """range(V[p]) <= range(V[0]) * (1 - 2^-n)^p, exactly."""
    r0 = rows[0].range.to_fraction()
    q = 1 - Fraction(1, 1 << n)
    for row in rows:
        if row.range.to_fraction() > r0 * q**row.p:
            return False, {"phase": row.p, "range": str(row.range)}
    return True, {}


def check_mac_ac_movers(rows) -> tuple[bool, dict]:
    """Every mover other than i_p lands in [(min+v_ip)/2, (max+v_ip)/2]."""
    by_p = {r.p: r for r in rows}
    for row in rows:
        nxt = by_p.get(row.p + 1)
        if nxt is None or row.i_p is None:
            continue
        vip = row.states[row.i_p]
        lo, hi = average(row.lo, vip), average(row.hi, vip)
        for j, v in nxt.movers.items():
            if j == row.i_p or j not in row.states:
                continue
            if not lo <= v <= hi:
                return False, {"phase": row.p, "node": j, "value": str(v), "low": str(lo), "high": str(hi)}
    return True, {}


def check_mac_ac2_movers(rows, n: int) -> tuple[bool, dict]:
    """Movers land in [min + (v_ip - min)/2^n, max - (max - v_ip)/2^n]."""
    by_p = {r.p: r for r in rows}
    for row in rows:
        nxt = by_p.get(row.p + 1)
        if nxt is None or row.i_p is None:
            continue
        vip = row.states[row.i_p]
        lo = row.lo + (vip - row.lo).shift(n)
        hi = row.hi - (row.hi - vip).shift(n)
        for j, v in nxt.movers.items():
            if j not in row.states:
                continue
            if not lo <= v <= hi:
                return False, {"phase": row.p, "node": j, "value": str(v), "low": str(lo), "high": str(hi)}
    return True, {}


def check_jump_provenance(rows, copies: dict | None = None) -> tuple[bool, dict]:
    """Jumped-to states are states some node actually held in that phase.

    Without ``copies`` (MAC-AC) a jumper's phase state must equal a mover's;
    with ``copies`` (MAC-AC2) each copied value must be some phase state.
    """
    by_p = {r.p: r for r in rows}
    if copies is None:
        for row in rows:
            sources = set(row.movers.values())
            for j, v in row.jumpers.items():
                if v not in sources:
                    return False, {"phase": row.p, "node": j, "value": str(v)}
        return True, {}
    for q, items in copies.items():
        row = by_p.get(q)
        held = set(row.states.values()) if row else set()
        for j, v in items:
            if v not in held:
                return False, {"phase": q, "node": j, "value": str(v)}
    return True, {}
