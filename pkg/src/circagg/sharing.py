"""Additive secret sharing and Shamir threshold sharing over F_q.

Additive shares carry a per-user mask plus zero-sum randomness: each of the
n recipients sees a uniformly random vector, while the n shares sum to
n * (x + u) exactly.  Shamir sharing puts the secret in the constant term of
a random degree-(t-1) polynomial, so any t evaluations reconstruct it and
any t-1 are consistent with every candidate secret.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .field import prg, vec_add, vec_neg, vec_scale, vec_sum, zeros
from .lagrange import basis_weights


class BadThreshold(ValueError):
    """Shamir threshold outside 1 <= t <= n."""


class InsufficientShares(RuntimeError):
    """Fewer shares than the reconstruction threshold."""


def zero_sum_vectors(dim: int, n: int, seed: int) -> list[np.ndarray]:
    """n vectors summing to zero: n-1 drawn from the PRG, the last balances."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return [zeros(dim)]
    stream = prg(seed, (n - 1) * dim).reshape(n - 1, dim)
    parts = [stream[j] for j in range(n - 1)]
    parts.append(vec_neg(vec_sum(parts)))
    return parts


def make_additive_shares(
    x: np.ndarray, u: np.ndarray, n: int, seed: int
) -> list[np.ndarray]:
    """Masked additive shares x + u + r_j with sum_j r_j = 0.

    The n shares sum to n * (x + u); any single share with unknown u and r
    is uniform.
    """
    base = vec_add(x, u)
    return [vec_add(base, r) for r in zero_sum_vectors(len(x), n, seed)]


@dataclass(frozen=True)
class ShamirShare:
    index: int  # nonzero evaluation point
    value: np.ndarray


def shamir_share(
    secret: np.ndarray,
    t: int,
    n: int,
    seed: int,
    indices: Sequence[int] | None = None,
) -> list[ShamirShare]:
    """Split `secret` into n shares with reconstruction threshold t."""
    if t < 1 or t > n:
        raise BadThreshold(f"need 1 <= t <= n, got t={t}, n={n}")
    if indices is None:
        indices = range(1, n + 1)
    indices = [int(i) for i in indices]
    if len(indices) != n or len(set(indices)) != n or any(i == 0 for i in indices):
        raise ValueError("indices must be n distinct nonzero points")
    dim = len(secret)
    coeffs = prg(seed, (t - 1) * dim).reshape(t - 1, dim) if t > 1 else None
    shares = []
    for idx in indices:
        # Horner over [c_{t-1}, ..., c_1], then + secret.
        acc = zeros(dim)
        if coeffs is not None:
            for m in range(t - 2, -1, -1):
                acc = vec_add(vec_scale(idx, acc), coeffs[m])
            acc = vec_scale(idx, acc)
        shares.append(ShamirShare(index=idx, value=vec_add(acc, secret)))
    return shares


def shamir_reconstruct(shares: Sequence[ShamirShare], t: int) -> np.ndarray:
    """Interpolate the shares at 0.

    Requires at least t shares with distinct indices; all supplied shares are
    used, which is exact whenever they are consistent.  No integrity check:
    inconsistent shares still yield an interpolation.
    """
    if len(shares) < t:
        raise InsufficientShares(f"{len(shares)} shares, threshold {t}")
    xs = [s.index for s in shares]
    weights = basis_weights(xs, 0)
    return vec_sum(
        [vec_scale(w, s.value) for w, s in zip(weights, shares)],
        dim=len(shares[0].value),
    )
