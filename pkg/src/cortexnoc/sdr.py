"""Sparse distributed representations and the seeded scalar encoder.

The encoder needs nothing but a pseudo-random generator: an integer ``L`` is
split into a bucket ``b = L // w`` and a remainder ``r = L % w``.  Two index
sets are drawn, ``R1`` from the stream seeded with ``b`` and ``R2`` from the
stream seeded with ``b + 1`` (skipping anything already in ``R1``).  The code
keeps the last ``w - r`` indices of ``R1`` and the first ``r`` of ``R2``, so
consecutive integers differ by exactly one bit inside a bucket and the last
value of bucket ``b`` shares all but the collided indices with bucket
``b + 1``.

Generator (bit-exact, portable)::

    splitmix64(z):  z += 0x9E3779B97F4A7C15
                    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
                    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
                    return z ^ (z >> 31)                    (all mod 2**64)

    state0 = splitmix64(master_seed ^ splitmix64(bucket)), or 1 if zero
    next:   x ^= x >> 12; x ^= x << 25; x ^= x >> 27
            return x * 0x2545F4914F6CDD1D                   (xorshift64*)

    index stream: next() % k, duplicates rejected in stream order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, UsageError

MASK64 = (1 << 64) - 1


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Xorshift64Star:
    """Small 64-bit generator used by the encoder."""

    __slots__ = ("state",)

    def __init__(self, master_seed: int, stream: int):
        s = splitmix64((master_seed & MASK64) ^ splitmix64(stream & MASK64))
        self.state = s or 1

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64


@dataclass(frozen=True)
class SdrParams:
    k: int = 2045
    w: int = 40
    master_seed: int = 0

    def __post_init__(self):
        if not 0 < self.w < self.k:
            raise ConfigError(f"need 0 < w < k, got w={self.w} k={self.k}", field="w")

    @property
    def sparsity(self) -> float:
        return self.w / self.k


@dataclass(frozen=True)
class Sdr:
    params: SdrParams
    active: tuple[int, ...]
    _set: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        act = tuple(int(i) for i in self.active)
        if any(b <= a for a, b in zip(act, act[1:])):
            raise UsageError("active indices must be strictly ascending")
        if act and (act[0] < 0 or act[-1] >= self.params.k):
            raise UsageError("active index out of range")
        object.__setattr__(self, "active", act)
        object.__setattr__(self, "_set", frozenset(act))

    @classmethod
    def from_indices(cls, params: SdrParams, indices: Iterable[int]) -> "Sdr":
        return cls(params, tuple(sorted(set(int(i) for i in indices))))

    def __len__(self) -> int:
        return len(self.active)

    def __contains__(self, bit: int) -> bool:
        return bit in self._set

    def as_set(self) -> frozenset:
        return self._set

    def dense(self) -> np.ndarray:
        out = np.zeros(self.params.k, dtype=bool)
        out[list(self.active)] = True
        return out


def unique_stream(params: SdrParams, seed: int, count: int, exclude: frozenset = frozenset()) -> list[int]:
    """First ``count`` distinct indices (mod k) of the stream for ``seed``."""
    gen = Xorshift64Star(params.master_seed, seed)
    seen: set[int] = set()
    out: list[int] = []
    k = params.k
    while len(out) < count:
        idx = gen.next() % k
        if idx in seen or idx in exclude:
            continue
        seen.add(idx)
        out.append(idx)
    return out


@lru_cache(maxsize=4096)
def _bucket_sets(params: SdrParams, bucket: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    r1 = unique_stream(params, bucket, params.w)
    r2 = unique_stream(params, bucket + 1, params.w, frozenset(r1))
    return tuple(r1), tuple(r2)


def encode(value: int, params: SdrParams) -> Sdr:
    """Encode a non-negative integer into an SDR with exactly ``w`` bits."""
    if value < 0:
        raise UsageError(f"encoder input must be non-negative, got {value}")
    w = params.w
    bucket, r = divmod(int(value), w)
    r1, r2 = _bucket_sets(params, bucket)
    return Sdr(params, tuple(sorted(r1[r:] + r2[:r])))


def overlap(a: Sdr, b: Sdr) -> int:
    if a.params.k != b.params.k:
        raise UsageError(f"width mismatch: {a.params.k} vs {b.params.k}")
    return len(a.as_set() & b.as_set())


def union_sdr(sdrs: Sequence[Sdr], params: SdrParams | None = None) -> Sdr:
    """Bitwise OR.  An empty list gives an empty SDR (needs ``params``)."""
    if not sdrs:
        return Sdr(params or SdrParams(), ())
    k = sdrs[0].params.k
    bits: set[int] = set()
    for s in sdrs:
        if s.params.k != k:
            raise UsageError("union of SDRs with different widths")
        bits |= s.as_set()
    return Sdr(sdrs[0].params, tuple(sorted(bits)))


def quantize(values: Sequence[float], lo: float, hi: float, levels: int = 130) -> list[int]:
    """Affine map of ``[lo, hi]`` onto ``0 .. levels-1``; outside values clamp."""
    if not 1 <= levels <= 130:
        raise ConfigError(f"levels must be in [1, 130], got {levels}", field="levels")
    if hi <= lo:
        return [0] * len(values)
    span = hi - lo
    out = []
    for v in values:
        # clamp before int(): tiny spans can push the ratio to inf
        frac = min(1.0, max(0.0, (v - lo) / span))
        out.append(int(np.floor(frac * (levels - 1) + 0.5)))
    return out
