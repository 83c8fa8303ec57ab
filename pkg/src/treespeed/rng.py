"""Deterministic random number plumbing.

Everything stochastic in this package is a pure function of a small set of
integer keys, built on the splitmix64 finalizer.  There are three consumers:

* ``SequentialRng`` — an ordinary counter-mode uniform stream, one per walk
  replica.  Fast, forkable by construction (distinct seeds give distinct
  streams), and exactly reproducible from ``(master_seed, replica, purpose)``.
* ``ClockStream`` / ``clock_value`` — keyed unit-mean exponential "alarm
  clocks" attached to directed tree edges.  Keying (rather than sequential
  draws) is what lets several ray extensions consume the *same* clocks in
  whatever order they reach them, which is the whole point of the shared-clock
  coupling used by the offspring sampler.
* ``race`` — the categorical-by-exponential-race primitive.

The numerics are mirrored bit-for-bit by the jitted kernels in
``_kernels.py``; tests assert the two implementations agree, so keep any
change to the mixing arithmetic in sync.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MULT_A = 0xBF58476D1CE4E5B9
_MULT_B = 0x94D049BB133111EB

# Stream purposes.  Mixed into the seed so that e.g. the walk of replica 7 and
# the offspring sampler of replica 7 never share randomness.
PURPOSE_WALK = 0x57414C4B
PURPOSE_OFFSPRING = 0x4F464653
PURPOSE_ENV = 0x454E5653


def mix64(z: int) -> int:
    """splitmix64 finalizer: a 64-bit bijective avalanche."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MULT_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MULT_B) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix2(a: int, b: int) -> int:
    """Order-sensitive combination of two words: mix2(a,b) != mix2(b,a)."""
    return mix64((a & _MASK64) ^ mix64(b))


def unit_from_word(w: int) -> float:
    """Map a 64-bit word to a uniform in the half-open interval (0, 1].

    The top 53 bits are used; the ``+1`` keeps 0 out of the range so that
    ``-log(u)`` is always finite.
    """
    return ((w >> 11) + 1) * 2.0 ** -53


@dataclass(frozen=True)
class SeedSpec:
    """Addressing for one independent random stream.

    ``master`` is the user-facing campaign seed, ``replica`` indexes the
    independent unit of work (walk replica or offspring sample batch) and
    ``purpose`` one of the PURPOSE_* tags above.
    """

    master: int
    replica: int = 0
    purpose: int = PURPOSE_WALK

    def __post_init__(self):
        if not (0 <= self.master <= _MASK64):
            raise ValueError("master seed must fit in 64 bits")
        if self.replica < 0:
            raise ValueError("replica index must be nonnegative")

    def state(self) -> int:
        """Collapse the spec into a single well-mixed 64-bit state word."""
        return mix2(mix2(self.master, self.purpose), self.replica)


@dataclass(frozen=True)
class StreamKey:
    """Address of one clock on a directed edge.

    ``slot`` 0 is the edge towards the parent, slot i (1..b) the edge towards
    child i.  ``k`` counts the clocks of that directed edge, starting at 1.
    """

    vertex: int
    slot: int
    k: int

    def __post_init__(self):
        if self.vertex < 0 or self.slot < 0 or self.k < 1:
            raise ValueError("invalid stream key")


def key_word(state: int, vertex: int, slot: int, k: int) -> int:
    return mix2(mix2(mix2(state, vertex), slot), k)


def clock_value(state: int, vertex: int, slot: int, k: int) -> float:
    """k-th unit-mean exponential clock of a directed edge, as a pure function."""
    return -math.log(unit_from_word(key_word(state, vertex, slot, k)))


class ClockStream:
    """Memoized view over the keyed clocks for one state word.

    Memoization is cosmetic (values are pure functions of the key); it exists
    so call sites can treat the stream as a lazily-filled table.
    """

    def __init__(self, seed: SeedSpec):
        self._state = seed.state()
        self._memo: dict[StreamKey, float] = {}

    def clock(self, key: StreamKey) -> float:
        got = self._memo.get(key)
        if got is None:
            got = clock_value(self._state, key.vertex, key.slot, key.k)
            self._memo[key] = got
        return got


def race(weights, clocks) -> int:
    """Index of the winning edge: argmin of clock/weight.

    A rate-w exponential alarm fires at time h/w when h is a unit-mean
    exponential, so the winner is categorical with probabilities proportional
    to the weights.
    """
    if len(weights) != len(clocks) or not weights:
        raise ValueError("weights and clocks must be equal-length, nonempty")
    best = -1
    best_t = math.inf
    for i, (w, h) in enumerate(zip(weights, clocks)):
        if w <= 0.0:
            raise ValueError("race weights must be strictly positive")
        t = h / w
        if t < best_t:
            best_t = t
            best = i
    return best


class SequentialRng:
    """Counter-mode splitmix64 uniform stream.

    State never mutates; the counter does.  ``next_unit`` returns uniforms in
    (0, 1], matching ``unit_from_word``.
    """

    def __init__(self, seed: SeedSpec):
        self._state = seed.state()
        self._n = 0

    def next_word(self) -> int:
        self._n += 1
        return mix64((self._state + self._n * _GOLDEN) & _MASK64)

    def next_unit(self) -> float:
        return unit_from_word(self.next_word())

    def next_exponential(self) -> float:
        return -math.log(self.next_unit())
