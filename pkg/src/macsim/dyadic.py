"""Exact dyadic rationals ``num / 2**exp``.

Every state reachable by the averaging protocols is a dyadic rational, so
all convergence checks can be done without tolerances.
"""

from __future__ import annotations

from fractions import Fraction
from functools import total_ordering
import re

_TEXT = re.compile(r"^\s*(-?\d+)\s*(?:/\s*2\^(\d+))?\s*$")


@total_ordering
class Dyadic:
    """Canonical dyadic rational: ``exp == 0`` or ``num`` is odd."""

    __slots__ = ("num", "exp")

    def __init__(self, num: int = 0, exp: int = 0) -> None:
        if exp < 0:
            raise ValueError("exponent must be non-negative")
        if num == 0:
            exp = 0
        elif exp:
            tz = (num & -num).bit_length() - 1
            if tz:
                shift = tz if tz < exp else exp
                num >>= shift
                exp -= shift
        self.num = num
        self.exp = exp

    # construction -------------------------------------------------------

    @classmethod
    def of(cls, x) -> "Dyadic":
        if isinstance(x, Dyadic):
            return x
        if isinstance(x, int):
            return cls(x, 0)
        if isinstance(x, float):
            x = Fraction(x)
        if isinstance(x, str):
            return cls.parse(x)
        if isinstance(x, Fraction):
            den = x.denominator
            if den & (den - 1):
                raise ValueError(f"{x} is not dyadic")
            return cls(x.numerator, den.bit_length() - 1)
        raise TypeError(f"cannot convert {type(x).__name__} to Dyadic")

    @classmethod
    def parse(cls, text: str) -> "Dyadic":
        m = _TEXT.match(text)
        if m is None:
            return cls.of(Fraction(text))
        return cls(int(m.group(1)), int(m.group(2) or 0))

    # arithmetic ---------------------------------------------------------

    def __add__(self, other: "Dyadic") -> "Dyadic":
        if not isinstance(other, Dyadic):
            other = Dyadic.of(other)
        a, b = self.exp, other.exp
        if a >= b:
            return Dyadic(self.num + (other.num << (a - b)), a)
        return Dyadic((self.num << (b - a)) + other.num, b)

    __radd__ = __add__

    def __neg__(self) -> "Dyadic":
        d = Dyadic.__new__(Dyadic)
        d.num = -self.num
        d.exp = self.exp
        return d

    def __sub__(self, other: "Dyadic") -> "Dyadic":
        if not isinstance(other, Dyadic):
            other = Dyadic.of(other)
        return self + (-other)

    def __rsub__(self, other) -> "Dyadic":
        return Dyadic.of(other) - self

    def half(self) -> "Dyadic":
        return Dyadic(self.num, self.exp + 1)

    def shift(self, k: int) -> "Dyadic":
        """Divide by ``2**k``."""
        return Dyadic(self.num, self.exp + k)

    def __mul__(self, other) -> "Dyadic":
        if isinstance(other, int):
            return Dyadic(self.num * other, self.exp)
        other = Dyadic.of(other)
        return Dyadic(self.num * other.num, self.exp + other.exp)

    __rmul__ = __mul__

    # comparison ---------------------------------------------------------

    def _cmp_key(self, other: "Dyadic") -> tuple[int, int]:
        a, b = self.exp, other.exp
        if a >= b:
            return self.num, other.num << (a - b)
        return self.num << (b - a), other.num

    def __eq__(self, other) -> bool:
        if isinstance(other, Dyadic):
            return self.num == other.num and self.exp == other.exp
        if isinstance(other, (int, Fraction)):
            return self.to_fraction() == other
        return NotImplemented

    def __lt__(self, other) -> bool:
        if not isinstance(other, Dyadic):
            if isinstance(other, (int, Fraction)):
                return self.to_fraction() < other
            return NotImplemented
        x, y = self._cmp_key(other)
        return x < y

    def __hash__(self) -> int:
        return hash(self.to_fraction()) if self.exp else hash(self.num)

    # conversion ---------------------------------------------------------

    def to_fraction(self) -> Fraction:
        return Fraction(self.num, 1 << self.exp)

    def __float__(self) -> float:
        return float(self.to_fraction())

    def decimal(self, digits: int = 12) -> str:
        return f"{float(self):.{digits}f}"

    def __str__(self) -> str:
        return f"{self.num}/2^{self.exp}" if self.exp else str(self.num)

    def __repr__(self) -> str:
        return f"Dyadic({self.num}, {self.exp})"


ZERO = Dyadic(0)
ONE = Dyadic(1)


def average(a: Dyadic, b: Dyadic) -> Dyadic:
    """Exact midpoint ``(a + b) / 2``."""
    s = a + b
    return Dyadic(s.num, s.exp + 1)
