"""Counter-based random streams.

A draw is a pure function of ``(run seed, stream id, draw counter)`` so a
node's coin flips cannot be observed or perturbed through the scheduler's
own generator, and cloning a stream is just copying its counter.
"""

from __future__ import annotations

import hashlib
import struct

_SCALE = 1.0 / (1 << 53)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary printable parts."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return struct.unpack("<Q", h.digest())[0]


class NodeRng:
    __slots__ = ("_key", "counter")

    def __init__(self, seed: int, stream: int, counter: int = 0) -> None:
        self._key = struct.pack("<qq", seed & 0x7FFFFFFFFFFFFFFF, stream)
        self.counter = counter

    def _next64(self) -> int:
        h = hashlib.blake2b(self._key + struct.pack("<Q", self.counter), digest_size=8)
        self.counter += 1
        return struct.unpack("<Q", h.digest())[0]

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self._next64() >> 11) * _SCALE

    def bit(self) -> int:
        return self._next64() & 1

    def clone(self) -> "NodeRng":
        c = NodeRng.__new__(NodeRng)
        c._key = self._key
        c.counter = self.counter
        return c
