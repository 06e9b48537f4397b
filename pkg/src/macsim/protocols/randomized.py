"""Binary agreement over the abstract MAC layer.

* :class:`AdoptCommit` - one-shot wait-free adopt-commit.
* :class:`Rbc` - repeated phased adopt-commit with a local-coin conciliator.
* :class:`FirstMover` - standalone first-mover conciliator with size guess n'.
* :class:`Rbc2` - ``Rbc`` with the first-mover conciliator and a size guess
  that doubles every ``c`` phases.

Stored ``(flag, phase)`` pairs start at phase -1 so that an untouched entry
never looks like it belongs to phase 0.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from ..sim.automaton import Automaton, Broadcast
from ..sim.rng import NodeRng

NEVER = -1


class Val(NamedTuple):
    v: int


class Prop(NamedTuple):
    v: int


class Value(NamedTuple):
    v: int
    phase: int


class Proposal(NamedTuple):
    v: int
    phase: int


class Value2(NamedTuple):
    v: int
    phase: int


class Coin(NamedTuple):
    v: int
    phase: int


class Dummy(NamedTuple):
    phase: int


class Ident(NamedTuple):
    pass


def _check_bit(x) -> int:
    if x not in (0, 1) or isinstance(x, bool):
        raise ValueError(f"binary input expected, got {x!r}")
    return int(x)


# ------------------------------------------------------------ adopt-commit


class AdoptCommit(Automaton):
    def __init__(self, v: int) -> None:
        super().__init__()
        self.v = _check_bit(v)
        self.seen = [False, False]
        self.proposal = None

    def step(self):
        if self.pc == 0:
            self.pc = 1
            return Broadcast(Val(self.v))
        if self.pc == 1:
            if self.proposal is not None:
                self.v = self.proposal
            self.pc = 2
            return Broadcast(Prop(self.v))
        kind = "adopt" if self.seen[1 - self.v] else "commit"
        return self.decide((kind, self.v))

    def receive(self, msg) -> None:
        if type(msg) is Val:
            self.seen[msg.v] = True
        else:
            self.proposal = msg.v


# ----------------------------------------------------------------- MAC-RBC

_L2, _L4, _L7, _L13, _FM, _FM_END, _START = range(7)


def rbc_phase_bound(n: int, delta: float) -> int:
    """Phases within which local-coin RBC terminates w.p. at least 1 - delta."""
    return math.ceil(2 ** (n - 1) * math.log(1 / delta))


def paper_c(delta: float) -> float:
    """Doubling period that makes each conciliator phase succeed w.p. 0.05."""
    return math.log(2 / delta) / 0.05


class Rbc(Automaton):
    """Phased adopt-commit plus a local coin; decides when -v was never seen.

    Handlers keep the highest phase seen per entry (``monotone``); with
    ``monotone=False`` they accept any message from the current phase or
    later, which lets a stored phase move backwards.
    """

    def __init__(self, x: int, rng: NodeRng, *, monotone: bool = True) -> None:
        super().__init__()
        self.v = _check_bit(x)
        self.p = 0
        self.p_old = 0
        self.seen = [(False, NEVER), (False, NEVER)]
        self.seen2 = [(False, NEVER), (False, NEVER)]
        self.proposal = (None, NEVER)
        self.rng = rng
        self.monotone = monotone
        self.pc = _L2
        self.note("phase", 0, self.v)

    # main thread ---------------------------------------------------------

    def _line2(self):
        self.p_old = self.p
        self.pc = _L4
        return Broadcast(Value(self.v, self.p))

    def _enter(self, v: int, p: int, how: str):
        self.v, self.p = v, p
        self.note("phase", p, v, how)
        return self._line2()

    def step(self):
        pc = self.pc
        if pc == _L2:
            return self._line2()
        if pc == _L4:
            if self.proposal[1] >= self.p:
                self.v, self.p = self.proposal
            self.pc = _L7
            return Broadcast(Proposal(self.v, self.p))
        if pc == _L7:
            if self.p_old != self.p:
                self.note("phase", self.p, self.v, "jump")
                return self._line2()
            if self.seen[1 - self.v][1] < self.p:
                return self.decide(self.v, phase=self.p)
            self.pc = _L13
            return Broadcast(Value2(self.v, self.p))
        if pc == _L13:
            flag, ph = self.seen2[1 - self.v]
            if ph > self.p:
                return self._enter(1 - self.v, ph, "jump")
            v = self.v
            if flag and ph == self.p:
                v = self.conciliate()
                if v is None:
                    return self.step()
            return self._enter(v, self.p + 1, "move")
        raise AssertionError(f"bad pc {pc}")

    def conciliate(self):
        return self.rng.bit()

    # handler -------------------------------------------------------------

    def _accept(self, stored_phase: int, p: int) -> bool:
        return p >= stored_phase if self.monotone else p >= self.p

    def receive(self, msg) -> None:
        t = type(msg)
        if t is Value:
            if self._accept(self.seen[msg.v][1], msg.phase):
                self.seen[msg.v] = (True, msg.phase)
        elif t is Value2:
            if self._accept(self.seen2[msg.v][1], msg.phase):
                self.seen2[msg.v] = (True, msg.phase)
        elif t is Proposal:
            if self._accept(self.proposal[1], msg.phase):
                self.proposal = (msg.v, msg.phase)
        else:
            self.receive_other(msg)

    def receive_other(self, msg) -> None:
        raise TypeError(f"unexpected message {msg!r}")


# ------------------------------------------------------------ first mover


def coin_probability(k: int, n_est: int) -> float:
    """Chance that round ``k`` reveals a coin; clamped to 1."""
    if k >= 62:
        return 1.0
    return min(1.0, (1 << k) / (2 * n_est))


class FirstMover(Automaton):
    """Standalone conciliator: reveal with doubling probability, echo the first coin."""

    def __init__(self, v: int, n_est: int, rng: NodeRng) -> None:
        super().__init__()
        if n_est < 1:
            raise ValueError("size estimate must be at least 1")
        self.v = _check_bit(v)
        self.n_est = n_est
        self.rng = rng
        self.coin = None
        self.k = 0

    def step(self):
        if self.pc == 0:
            if self.coin is None:
                r = self.rng.random()
                k = self.k
                self.k += 1
                if r < coin_probability(k, self.n_est):
                    self.note("fm", "coin", self.v, 0)
                    return Broadcast(Coin(self.v, 0))
                self.note("fm", "dummy", None, 0)
                return Broadcast(Dummy(0))
            self.pc = 1
            self.note("fm", "follow", self.coin, 0)
            return Broadcast(Coin(self.coin, 0))
        return self.decide(self.coin)

    def receive(self, msg) -> None:
        if type(msg) is Coin and self.coin is None:
            self.coin = msg.v


# -------------------------------------------------------------------- RBC2


class Rbc2(Rbc):
    """RBC with the first-mover conciliator and a doubling size estimate.

    A COIN from a later phase makes the node adopt that coin and jump one
    phase past it; the main thread restarts at the top of the loop once its
    in-flight broadcast completes.
    """

    def __init__(self, x: int, rng: NodeRng, *, n0: int = 1, c: float = 4.0) -> None:
        super().__init__(x, rng, monotone=True)
        if n0 < 1 or c <= 0:
            raise ValueError("need n0 >= 1 and c > 0")
        self.n0 = n0
        self.c = c
        self.coin = (None, NEVER)
        self.n_est = 1
        self.k = 0
        self.restart = False
        self.pc = _START

    def step(self):
        if self.pc == _START:
            self.pc = _L2
            return Broadcast(Ident())
        if self.restart:
            self.restart = False
            self.note("phase", self.p, self.v, "coin-jump")
            return self._line2()
        pc = self.pc
        if pc == _FM:
            if self.coin[1] < self.p:
                r = self.rng.random()
                k = self.k
                self.k += 1
                if r < coin_probability(k, self.n_est):
                    self.note("fm", "coin", self.v, self.p)
                    return Broadcast(Coin(self.v, self.p))
                self.note("fm", "dummy", None, self.p)
                return Broadcast(Dummy(self.p))
            self.pc = _FM_END
            self.note("fm", "follow", self.coin[0], self.p)
            return Broadcast(Coin(self.coin[0], self.p))
        if pc == _FM_END:
            v, p = self.coin
            return self._enter(v, p + 1, "move")
        return super().step()

    def conciliate(self):
        self.n_est = (1 << math.floor(self.p / self.c)) * self.n0
        self.k = 0
        self.pc = _FM
        return None

    def receive_other(self, msg) -> None:
        t = type(msg)
        if t is Coin:
            if msg.phase == self.p and msg.phase > self.coin[1]:
                self.coin = (msg.v, msg.phase)
            elif msg.phase > self.p:
                self.v, self.p = msg.v, msg.phase + 1
                self.restart = True
        elif t is Dummy or t is Ident:
            pass
        else:
            raise TypeError(f"unexpected message {msg!r}")


# ---------------------------------------------------------- classification


class PhaseTally(NamedTuple):
    phase: int
    coin: int
    dummy: int
    follow: int
    successful: int


def classify_trace(trace) -> dict:
    """Tally first-mover broadcasts per phase and count successful coins.

    An original coin ``(v, p)`` is successful when some node completes (gets
    the acknowledgement for) a follow-up broadcast of ``v`` in phase ``p``.
    """
    by_segment: dict[tuple[int, int], tuple] = {}
    for time, node, it in trace.notes:
        if it[0] == "fm":
            by_segment[(node, time)] = it
    if any(not isinstance(r[2], (Value, Proposal, Value2, Coin, Dummy, Ident)) for r in trace.broadcasts.values()):
        raise ValueError("not a randomized-consensus trace")
    n_rbc = n_o = n_f = 0
    phases: dict[int, dict] = {}
    originals = []
    completed_follow = set()
    for bid, (sender, seq, payload, t_sub, t_ack) in sorted(trace.broadcasts.items()):
        if type(payload) not in (Coin, Dummy):
            n_rbc += 1
            continue
        it = by_segment.get((sender, t_sub))
        if it is None:
            raise ValueError(f"broadcast {bid} has no conciliator annotation")
        kind, v, p = it[1], it[2], it[3]
        row = phases.setdefault(p, {"coin": 0, "dummy": 0, "follow": 0})
        row[kind] += 1
        if kind == "follow":
            n_f += 1
            if t_ack is not None:
                completed_follow.add((v, p))
        else:
            n_o += 1
            if kind == "coin":
                originals.append((bid, v, p))
    succ: dict[int, int] = {}
    for bid, v, p in originals:
        if (v, p) in completed_follow:
            succ[p] = succ.get(p, 0) + 1
    tallies = [PhaseTally(p, r["coin"], r["dummy"], r["follow"], succ.get(p, 0)) for p, r in sorted(phases.items())]
    return {
        "N_RBC": n_rbc,
        "N_O": n_o,
        "N_F": n_f,
        "phases": tallies,
        "successful": succ,
        "flags": {t.phase: ("none" if t.successful == 0 else "one" if t.successful == 1 else "many") for t in tallies},
    }


def decision_phases(trace) -> dict[int, int]:
    """Phase in which each decided node produced its output."""
    return {node: it[2]["phase"] for _, node, it in trace.notes if it[0] == "output"}


class FirstMoverEstimate(NamedTuple):
    trials: int
    exactly_one: int
    probability: float
    interval: tuple[float, float]
    originals: list[int]


def run_first_mover(n: int, n_est: int, seed: int, adversary: str = "random", inputs=None):
    """One standalone first-mover execution; returns the trace."""
    from ..sim.adversary import make_adversary
    from ..sim.engine import MacEngine
    from ..sim.rng import derive_seed

    if inputs is None:
        bits = NodeRng(derive_seed("fm-inputs", seed), 0)
        inputs = [bits.bit() for _ in range(n)]
    autos = [FirstMover(x, n_est, NodeRng(seed, i)) for i, x in enumerate(inputs)]
    engine = MacEngine(autos, record_events=False, meta={"protocol": "first-mover", "seed": seed})
    trace = engine.run(make_adversary(adversary, derive_seed("adv", seed)))
    trace.meta["inputs"] = list(inputs)
    return trace


def estimate_firstmover_success(n: int, n_est: int, trials: int, seed: int = 0,
                                adversary: str = "random", confidence: float = 0.95) -> FirstMoverEstimate:
    """Fraction of runs with exactly one successful original coin broadcast."""
    from ..harness.stats import wilson_interval
    from ..sim.rng import derive_seed

    if trials < 100:
        raise ValueError("at least 100 trials are needed for a meaningful interval")
    if n_est < n:
        raise ValueError("the size estimate must be at least n")
    hits = 0
    originals = []
    for t in range(trials):
        trace = run_first_mover(n, n_est, derive_seed("fm", seed, t), adversary)
        c = classify_trace(trace)
        hits += c["successful"].get(0, 0) == 1
        originals.append(c["N_O"])
    return FirstMoverEstimate(trials, hits, hits / trials, wilson_interval(hits, trials, confidence), originals)
