"""Pairwise-mask baseline: the all-pairs secure-aggregation protocol.

Every pair of users holds a shared seed whose PRG stream one side adds and
the other subtracts, so pairwise masks telescope out of the sum of all
masked models.  A private per-user seed additionally hides each model in
case its owner is merely delayed.  All seeds are Shamir-shared up front;
after dropouts, the server reconstructs the private seeds of survivors and
the pairwise seeds of dropped users (never both for one user), re-expands
the streams, and removes them.

Seed reconstruction is the protocol's bottleneck: the server expands
(N - D) + D * (N - D) streams per round, which is what makes the all-pairs
design quadratic while the grouped design stays near-linear.

Key agreement is replaced by trusted orchestrator distribution; only the
computation and data volumes of the real protocol are modeled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .field import PrgStream, derive_seed, prg, vec, vec_add, vec_sub, vec_sum, zeros
from .net import RoundMetrics
from .sharing import (
    BadThreshold,
    InsufficientShares,
    ShamirShare,
    shamir_reconstruct,
    shamir_share,
)

_TAG_SEED_SHARE = 7


def _seed_to_vec(seed: int) -> np.ndarray:
    return vec([seed & 0xFFFFFFFF, seed >> 32])


def _vec_to_seed(v: np.ndarray) -> int:
    return int(v[0]) + (int(v[1]) << 32)


@dataclass
class PairwiseState:
    """All seeds plus their Shamir shares, as dealt before the round."""

    n_users: int
    threshold: int
    pair_seeds: dict[tuple[int, int], int]  # key (u, v) with u < v
    self_seeds: dict[int, int]
    pair_shares: dict[tuple[int, int], list[ShamirShare]]
    self_shares: dict[int, list[ShamirShare]]

    @property
    def n_seeds(self) -> int:
        return len(self.pair_seeds) + len(self.self_seeds)


def setup(n_users: int, threshold: int, seed: int) -> PairwiseState:
    """Deal N(N-1)/2 pairwise seeds plus N private seeds, Shamir-shared.

    Each seed is built from two PRG draws so both 32-bit halves are already
    field elements; the halves are shared together as a length-2 vector.
    """
    if not 2 <= threshold <= n_users:
        raise BadThreshold(f"need 2 <= t <= N, got t={threshold}, N={n_users}")
    stream = PrgStream(seed)

    def draw_seed() -> int:
        return stream.next_element() + (stream.next_element() << 32)

    pair_seeds = {
        (u, v): draw_seed()
        for u in range(n_users)
        for v in range(u + 1, n_users)
    }
    self_seeds = {u: draw_seed() for u in range(n_users)}
    counter = 0
    pair_shares = {}
    for key, s in pair_seeds.items():
        counter += 1
        pair_shares[key] = shamir_share(
            _seed_to_vec(s), threshold, n_users,
            derive_seed(seed, _TAG_SEED_SHARE, counter),
        )
    self_shares = {}
    for u, s in self_seeds.items():
        counter += 1
        self_shares[u] = shamir_share(
            _seed_to_vec(s), threshold, n_users,
            derive_seed(seed, _TAG_SEED_SHARE, counter),
        )
    return PairwiseState(
        n_users=n_users,
        threshold=threshold,
        pair_seeds=pair_seeds,
        self_seeds=self_seeds,
        pair_shares=pair_shares,
        self_shares=self_shares,
    )


def mask_model(user: int, x: np.ndarray, state: PairwiseState) -> np.ndarray:
    """Masked upload: x + PRG(self seed) +/- the pairwise streams.

    The stream for pair (u, v) is added by u and subtracted by v, so the
    pairwise terms cancel once all masked models are summed.
    """
    dim = len(x)
    y = vec_add(vec(x), prg(state.self_seeds[user], dim))
    for v in range(user + 1, state.n_users):
        y = vec_add(y, prg(state.pair_seeds[(user, v)], dim))
    for v in range(user):
        y = vec_sub(y, prg(state.pair_seeds[(v, user)], dim))
    return y


def unmask_aggregate(
    ys: Mapping[int, np.ndarray],
    dropped: set[int],
    state: PairwiseState,
    threshold: int,
    metrics: RoundMetrics | None = None,
) -> np.ndarray:
    """Server-side recovery: strip self masks, cancel dangling pairwise masks.

    `ys` maps each survivor to its masked model.  The server reconstructs
    the self seed of every survivor and the pairwise seeds joining each
    dropped user to each survivor, from `threshold` shares apiece -- never
    both seed kinds for one user.  `metrics.prg_streams` counts exactly the
    (N - D) + D * (N - D) reconstruction-phase expansions.
    """
    survivors = sorted(ys)
    if set(survivors) & set(dropped):
        raise ValueError("a user cannot be both surviving and dropped")
    if len(survivors) < threshold:
        raise InsufficientShares(
            f"{len(survivors)} survivors cannot meet threshold {threshold}"
        )
    dim = len(next(iter(ys.values())))
    carriers = survivors[:threshold]

    def reconstruct_seed(shares: list[ShamirShare]) -> int:
        held = [shares[u] for u in carriers]
        return _vec_to_seed(shamir_reconstruct(held, threshold))

    total = vec_sum([ys[u] for u in survivors], dim=dim)
    for u in survivors:
        b = reconstruct_seed(state.self_shares[u])
        total = vec_sub(total, prg(b, dim))
        if metrics is not None:
            metrics.prg_streams += 1
    for d in sorted(dropped):
        for u in survivors:
            key = (min(u, d), max(u, d))
            s = reconstruct_seed(state.pair_shares[key])
            stream = prg(s, dim)
            if metrics is not None:
                metrics.prg_streams += 1
            # Survivor u carried the (u, d) stream with sign(d - u); undo it.
            if u < d:
                total = vec_sub(total, stream)
            else:
                total = vec_add(total, stream)
    return total


def masked_upload_volume(n_users: int, dim: int) -> int:
    """Field elements uploaded in the masking phase: every user sends once."""
    return n_users * dim


def seed_share_count(n_users: int) -> int:
    """Share bundles distributed during setup: one per (owner, recipient)."""
    return n_users * n_users
