"""Verdict predicates over run outputs.

All comparisons are exact: values are ints, Fractions or Dyadics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping

from .dyadic import Dyadic


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    witness: dict = field(default_factory=dict)

    @classmethod
    def ok(cls, name: str) -> "Verdict":
        return cls(name, True)

    @classmethod
    def fail(cls, name: str, **witness) -> "Verdict":
        return cls(name, False, witness)

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        if self.passed:
            return f"{self.name}: pass"
        detail = ", ".join(f"{k}={v}" for k, v in self.witness.items())
        return f"{self.name}: FAIL ({detail})"


def _exact(x) -> Fraction:
    if isinstance(x, Dyadic):
        return x.to_fraction()
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


def _items(outputs) -> list[tuple[Any, Any]]:
    if isinstance(outputs, Mapping):
        return sorted(outputs.items(), key=lambda kv: repr(kv[0]))
    return list(enumerate(outputs))


def check_validity(outputs, inputs, *, binary: bool = False) -> Verdict:
    """Binary: every output is some input. Otherwise: within the input range."""
    ins = list(inputs.values()) if isinstance(inputs, Mapping) else list(inputs)
    outs = _items(outputs)
    if binary:
        allowed = set(ins)
        for node, v in outs:
            if v not in allowed:
                return Verdict.fail("validity", node=node, output=v, inputs=sorted(allowed))
        return Verdict.ok("validity")
    if not ins:
        return Verdict.ok("validity") if not outs else Verdict.fail("validity", reason="no inputs")
    lo = min(_exact(x) for x in ins)
    hi = max(_exact(x) for x in ins)
    for node, v in outs:
        x = _exact(v)
        if not lo <= x <= hi:
            return Verdict.fail("validity", node=node, output=str(v), low=str(lo), high=str(hi))
    return Verdict.ok("validity")


def check_epsilon_agreement(outputs, eps) -> Verdict:
    if _exact(eps) <= 0:
        raise ValueError("epsilon must be positive")
    outs = _items(outputs)
    if len(outs) < 2:
        return Verdict.ok("epsilon-agreement")
    lo = min(outs, key=lambda kv: _exact(kv[1]))
    hi = max(outs, key=lambda kv: _exact(kv[1]))
    spread = _exact(hi[1]) - _exact(lo[1])
    if spread > _exact(eps):
        return Verdict.fail("epsilon-agreement", low=(lo[0], str(lo[1])), high=(hi[0], str(hi[1])),
                            spread=str(spread), eps=str(eps))
    return Verdict.ok("epsilon-agreement")


def check_agreement(outputs) -> Verdict:
    outs = _items(outputs)
    if not outs:
        return Verdict.ok("agreement")
    first = outs[0]
    for node, v in outs[1:]:
        if v != first[1]:
            return Verdict.fail("agreement", nodes=(first[0], node), values=(first[1], v))
    return Verdict.ok("agreement")


def check_coherence(ac_outputs) -> Verdict:
    """If anyone commits v, every output carries v."""
    outs = _items(ac_outputs)
    for node, (kind, v) in outs:
        if kind not in ("commit", "adopt"):
            raise ValueError(f"node {node}: bad adopt-commit output {(kind, v)!r}")
    commits = [(node, v) for node, (kind, v) in outs if kind == "commit"]
    if not commits:
        return Verdict.ok("coherence")
    cnode, cv = commits[0]
    for node, (kind, v) in outs:
        if v != cv:
            return Verdict.fail("coherence", commit=(cnode, cv), other=(node, kind, v))
    return Verdict.ok("coherence")


def check_convergence(ac_outputs, inputs: Iterable) -> Verdict:
    """Equal inputs force every output to commit that input."""
    ins = set(inputs.values()) if isinstance(inputs, Mapping) else set(inputs)
    if len(ins) != 1:
        return Verdict.ok("convergence")
    (v,) = ins
    for node, out in _items(ac_outputs):
        if out != ("commit", v):
            return Verdict.fail("convergence", node=node, output=out, input=v)
    return Verdict.ok("convergence")


def first_failure(verdicts: Iterable[Verdict]) -> Verdict | None:
    for v in verdicts:
        if not v:
            return v
    return None
