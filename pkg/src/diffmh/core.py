"""Value types, seeded random streams and the branch-weight primitives.

Everything the samplers share lives here: a forward-mode ``DualValue`` used for
log-density ratios and acceptance probabilities, a splittable ``RandomStream``
built on numpy's counter-based Philox generator, and the two small operations
that turn an accept/reject decision into a weighted alternative branch
(``flip_weight``) and keep a single alternative alive (``prune``).
"""

from __future__ import annotations

import enum
import math
from typing import Sequence, Union

import numpy as np

Number = Union[int, float]


class InvalidStateError(RuntimeError):
    """Raised when a sampler reaches a state that correct sampling cannot produce."""


class DualValue:
    """Scalar carrying a value and its derivative with respect to one parameter."""

    __slots__ = ("value", "deriv")

    def __init__(self, value: Number, deriv: Number = 0.0):
        self.value = float(value)
        self.deriv = float(deriv)

    @staticmethod
    def _coerce(other: Union["DualValue", Number]) -> "DualValue":
        return other if isinstance(other, DualValue) else DualValue(other, 0.0)

    def __add__(self, other):
        o = DualValue._coerce(other)
        return DualValue(self.value + o.value, self.deriv + o.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        o = DualValue._coerce(other)
        return DualValue(self.value - o.value, self.deriv - o.deriv)

    def __rsub__(self, other):
        return DualValue._coerce(other) - self

    def __mul__(self, other):
        o = DualValue._coerce(other)
        return DualValue(self.value * o.value, self.deriv * o.value + self.value * o.deriv)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = DualValue._coerce(other)
        if o.value == 0.0:
            raise ZeroDivisionError("DualValue division by zero")
        inv = 1.0 / o.value
        return DualValue(self.value * inv, (self.deriv * o.value - self.value * o.deriv) * inv * inv)

    def __rtruediv__(self, other):
        return DualValue._coerce(other) / self

    def __neg__(self):
        return DualValue(-self.value, -self.deriv)

    def exp(self) -> "DualValue":
        e = math.exp(self.value)
        return DualValue(e, e * self.deriv)

    def log(self) -> "DualValue":
        if self.value <= 0.0:
            raise ValueError(f"log of non-positive value {self.value}")
        return DualValue(math.log(self.value), self.deriv / self.value)

    def min_const(self, c: float) -> "DualValue":
        """``min(self, c)`` for a constant ``c``; the kink ``self == c`` gets derivative 0."""
        if self.value < c:
            return DualValue(self.value, self.deriv)
        return DualValue(c, 0.0)

    def __eq__(self, other):
        if not isinstance(other, DualValue):
            return NotImplemented
        return self.value == other.value and self.deriv == other.deriv

    def __hash__(self):
        return hash((self.value, self.deriv))

    def __repr__(self):
        return f"DualValue(value={self.value!r}, deriv={self.deriv!r})"


class Purpose(enum.IntEnum):
    """Independent substreams used by every chain step."""

    PROPOSAL = 0
    COUPLING = 1
    ACCEPT = 2
    PRUNE = 3


class RandomStream:
    """Reproducible random stream keyed by ``(seed, key...)``.

    Substreams come from ``numpy.random.SeedSequence`` spawn keys over a Philox
    counter-based generator, so ``RandomStream(s).spawn(i)`` is the same stream
    no matter how many other substreams were created first. Scalar draws are
    served from small growing buffers; the realized sequence does not depend on
    the buffer size.
    """

    _MAX_BLOCK = 4096

    def __init__(self, seed: int, key: Sequence[int] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.Philox(ss))
        self._ubuf = np.empty(0)
        self._upos = 0
        self._nbuf = np.empty(0)
        self._npos = 0
        self._block = 16

    def spawn(self, *key: int) -> "RandomStream":
        return RandomStream(self.seed, self.key + tuple(int(k) for k in key))

    def purpose(self, p: Purpose) -> "RandomStream":
        return self.spawn(int(p))

    def _grow(self) -> int:
        n = self._block
        self._block = min(2 * n, self._MAX_BLOCK)
        return n

    def uniform(self) -> float:
        """One draw from Uniform[0, 1)."""
        if self._upos >= len(self._ubuf):
            self._ubuf = self._gen.random(self._grow())
            self._upos = 0
        u = self._ubuf[self._upos]
        self._upos += 1
        return float(u)

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` uniforms, continuing the same sequence as ``uniform()``."""
        head = self._ubuf[self._upos:self._upos + n]
        self._upos += len(head)
        if len(head) == n:
            return head.copy()
        return np.concatenate([head, self._gen.random(n - len(head))])

    def normal(self) -> float:
        if self._npos >= len(self._nbuf):
            self._nbuf = self._gen.standard_normal(self._grow())
            self._npos = 0
        z = self._nbuf[self._npos]
        self._npos += 1
        return float(z)

    def choice(self, n: int) -> int:
        """Uniform integer in ``range(n)`` from a single uniform draw."""
        return min(int(self.uniform() * n), n - 1)

    def categorical(self, probs: Sequence[float]) -> int:
        """Index drawn from ``probs`` by inversion of a single uniform."""
        u = self.uniform()
        acc = 0.0
        last = 0
        for i, p in enumerate(probs):
            if p <= 0.0:
                continue
            acc += p
            last = i
            if u < acc:
                return i
        return last

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self.key})"


class ChainStreams:
    """The per-purpose substreams of one chain run."""

    __slots__ = ("proposal", "coupling", "accept", "prune")

    def __init__(self, stream: RandomStream):
        self.proposal = stream.purpose(Purpose.PROPOSAL)
        self.coupling = stream.purpose(Purpose.COUPLING)
        self.accept = stream.purpose(Purpose.ACCEPT)
        self.prune = stream.purpose(Purpose.PRUNE)


def flip_weight(alpha: DualValue, accepted: bool) -> float:
    """Weight of flipping the realized accept/reject decision.

    Accepted steps branch to a rejection with weight ``max(0, -dalpha)/alpha``;
    rejected steps branch to an acceptance with weight ``max(0, dalpha)/(1-alpha)``.
    """
    a, da = alpha.value, alpha.deriv
    if accepted:
        if a <= 0.0:
            raise InvalidStateError(f"accepted a proposal with acceptance probability {a}")
        return max(0.0, -da) / a
    if a >= 1.0:
        raise InvalidStateError(f"rejected a proposal with acceptance probability {a}")
    return max(0.0, da) / (1.0 - a)


def prune(w_prev: float, w_new: float, stream: RandomStream) -> tuple[float, bool]:
    """Keep one of two alternatives, the new one with probability ``w_new / (w_prev + w_new)``.

    One uniform is consumed on every call so the prune stream advances in lockstep
    with the chain.
    """
    if w_prev < 0.0 or w_new < 0.0:
        raise ValueError(f"negative branch weight ({w_prev}, {w_new})")
    w = w_prev + w_new
    u = stream.uniform()
    if w == 0.0:
        return 0.0, False
    return w, u * w < w_new
