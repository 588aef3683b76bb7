"""Arithmetic over the prime field F_q with q = 2**32 - 5, plus a seedable PRG.

Scalars are plain Python ints in [0, q).  Vectors are numpy uint64 arrays
whose entries are all in [0, q); since (q-1)**2 < 2**64, elementwise uint64
multiplication followed by a single modulo is exact, and sums of up to 2**32
entries cannot overflow either.

The PRG is splitmix64 with rejection sampling.  Draw i mixes the state
``seed + i*GAMMA`` (mod 2**64), keeps the low 32 bits, and rejects values
>= q, which makes the stream exactly uniform on [0, q) and lets arbitrary
prefixes be regenerated from the seed alone.  It is reproducible across
platforms and NOT cryptographically secure: it exists so simulations are
deterministic, not so anything stays secret against a real adversary.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

Q = (1 << 32) - 5  # largest prime below 2**32; fixed protocol-wide
_QU = np.uint64(Q)
_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class ZeroInverse(ZeroDivisionError):
    """Raised when inverting 0 in F_q."""


# ---------------------------------------------------------------------------
# Scalar arithmetic
# ---------------------------------------------------------------------------


def add(a: int, b: int) -> int:
    return (a + b) % Q


def sub(a: int, b: int) -> int:
    return (a - b) % Q


def mul(a: int, b: int) -> int:
    return (a * b) % Q


def neg(a: int) -> int:
    return (-a) % Q


def inv(a: int) -> int:
    """Multiplicative inverse via Fermat: a**(q-2) mod q."""
    if a % Q == 0:
        raise ZeroInverse("0 has no inverse in F_q")
    return pow(a, Q - 2, Q)


# ---------------------------------------------------------------------------
# Vector arithmetic (numpy uint64, canonical entries)
# ---------------------------------------------------------------------------


def vec(values: Iterable[int] | np.ndarray) -> np.ndarray:
    """Canonicalize a sequence of ints into an F_q vector."""
    a = np.asarray(values)
    if a.dtype == np.uint64:
        return a % _QU
    if np.issubdtype(a.dtype, np.integer):
        # numpy % with a positive modulus is nonnegative, so negatives
        # reduce correctly before the cast.
        return (a % Q).astype(np.uint64)
    return (np.asarray([int(v) % Q for v in np.ravel(a)], dtype=np.uint64)
            .reshape(a.shape))


def zeros(dim: int) -> np.ndarray:
    return np.zeros(dim, dtype=np.uint64)


def vec_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a + b) % _QU


def vec_sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a + Q - b stays below 2**33, so no uint64 wraparound.
    return (a + _QU - b) % _QU


def vec_neg(a: np.ndarray) -> np.ndarray:
    return (_QU - a) % _QU


def vec_scale(c: int, a: np.ndarray) -> np.ndarray:
    return (np.uint64(c % Q) * a) % _QU


def vec_sum(vectors: Sequence[np.ndarray], dim: int | None = None) -> np.ndarray:
    """Sum of F_q vectors; returns the zero vector for an empty sequence."""
    vectors = list(vectors)
    if not vectors:
        if dim is None:
            raise ValueError("dim required to sum an empty sequence")
        return zeros(dim)
    if len(vectors) == 1:
        return vectors[0].copy()
    return np.sum(np.stack(vectors), axis=0, dtype=np.uint64) % _QU


# ---------------------------------------------------------------------------
# Pseudorandom generation (splitmix64 + rejection)
# ---------------------------------------------------------------------------


def _mix64_scalar(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def prg(seed: int, count: int) -> np.ndarray:
    """Deterministic stream of `count` uniform field elements.

    prg(seed, n) is always a prefix of prg(seed, n + m): acceptance of draw i
    depends only on (seed, i).
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    out: list[np.ndarray] = []
    have = 0
    start = 1
    while have < count:
        n = (count - have) + 4  # tiny slack; rejection odds are 5 / 2**32
        idx = np.arange(start, start + n, dtype=np.uint64)
        raw = _mix64_array(np.uint64(seed & _MASK64) + idx * np.uint64(_GAMMA))
        vals = raw & np.uint64(0xFFFFFFFF)
        accepted = vals[vals < _QU]
        out.append(accepted)
        have += len(accepted)
        start += n
    if not out:
        return zeros(0)
    return np.concatenate(out)[:count]


class PrgStream:
    """Incremental view of the same stream as :func:`prg`.

    Used where draws are consumed one at a time (shuffles, dropout picks).
    """

    def __init__(self, seed: int):
        self._seed = seed & _MASK64
        self._i = 0

    def next_element(self) -> int:
        """Next field element, uniform on [0, Q)."""
        while True:
            self._i += 1
            v = _mix64_scalar(self._seed + self._i * _GAMMA) & 0xFFFFFFFF
            if v < Q:
                return v

    def next_below(self, m: int) -> int:
        """Uniform int in [0, m) by rejection, exact for any 1 <= m <= Q."""
        if not 1 <= m <= Q:
            raise ValueError("m out of range")
        limit = Q - Q % m
        while True:
            v = self.next_element()
            if v < limit:
                return v % m


def derive_seed(base: int, *parts: int) -> int:
    """Fold integer tags into a base seed; deterministic domain separation."""
    s = base & _MASK64
    for p in parts:
        s = _mix64_scalar(s + _GAMMA)
        s = _mix64_scalar(s ^ (p & _MASK64))
    return s
