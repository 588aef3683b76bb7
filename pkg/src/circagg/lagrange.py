"""Lagrange interpolation over F_q: redundancy encoding and erasure recovery.

Vector-valued polynomials are handled componentwise: the scalar basis
weights for a (point set, target) pair are computed once with Python int
arithmetic, then applied across all coordinates with numpy ops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .field import Q, inv, vec_scale, vec_sum


class DuplicatePoints(ValueError):
    """Two evaluation points in one set coincide."""


class InsufficientEvaluations(RuntimeError):
    """Fewer evaluations than the degree bound requires.

    This is the protocol-abort signal: a group lost more members than the
    coded redundancy can cover.
    """


@dataclass(frozen=True)
class EvalPoints:
    """Global evaluation-point layout shared by every group.

    Plain values live at alphas[j] = j + 1 (member position, 1-indexed) and
    coded copy m of member j lives at betas[m * len(alphas) + j]
    = (m + 1) * capacity + j + 1.  Keeping one global layout means running
    sums from different groups are evaluations of *different* polynomials at
    the *same* points, so they stay pointwise addable when merged.
    """

    alphas: tuple[int, ...]
    betas: tuple[int, ...]
    copies: int

    def __post_init__(self):
        pts = self.alphas + self.betas
        if len(set(pts)) != len(pts):
            raise DuplicatePoints("alpha/beta points must be pairwise distinct")
        if self.copies < 1 or len(self.betas) != self.copies * len(self.alphas):
            raise ValueError("betas must hold `copies` blocks of len(alphas)")

    @classmethod
    def standard(cls, capacity: int, copies: int = 1) -> "EvalPoints":
        """Point layout for groups of up to `capacity` members."""
        alphas = tuple(range(1, capacity + 1))
        betas = tuple(
            m * capacity + j
            for m in range(1, copies + 1)
            for j in range(1, capacity + 1)
        )
        return cls(alphas=alphas, betas=betas, copies=copies)

    def restrict(self, n: int) -> "EvalPoints":
        """First n members' points, preserving the global beta offsets."""
        cap = len(self.alphas)
        if not 1 <= n <= cap:
            raise ValueError(f"cannot restrict {cap} points to {n}")
        betas = tuple(
            self.betas[m * cap + j] for m in range(self.copies) for j in range(n)
        )
        return EvalPoints(alphas=self.alphas[:n], betas=betas, copies=self.copies)

    def alpha(self, member: int) -> int:
        return self.alphas[member]

    def beta(self, copy: int, member: int) -> int:
        return self.betas[copy * len(self.alphas) + member]


def _check_distinct(xs: Sequence[int]) -> None:
    if len(set(xs)) != len(xs):
        raise DuplicatePoints(f"duplicate evaluation points in {sorted(xs)}")


def basis_weights(xs: Sequence[int], target: int) -> list[int]:
    """Lagrange basis weights w_j with h(target) = sum_j w_j * y_j."""
    _check_distinct(xs)
    weights = []
    for j, xj in enumerate(xs):
        num, den = 1, 1
        for m, xm in enumerate(xs):
            if m == j:
                continue
            num = num * ((target - xm) % Q) % Q
            den = den * ((xj - xm) % Q) % Q
        weights.append(num * inv(den) % Q)
    return weights


def interpolate_eval(
    known: Sequence[tuple[int, np.ndarray]], target: int
) -> np.ndarray:
    """Evaluate at `target` the unique polynomial through all known points.

    `known` holds (point, vector) pairs; the fit is componentwise and the
    polynomial has degree <= len(known) - 1.
    """
    if not known:
        raise ValueError("need at least one known evaluation")
    xs = [p for p, _ in known]
    weights = basis_weights(xs, target)
    return vec_sum(
        [vec_scale(w, v) for w, (_, v) in zip(weights, known)],
        dim=len(known[0][1]),
    )


def encode_shares(
    shares: Sequence[np.ndarray], pts: EvalPoints
) -> list[np.ndarray]:
    """Coded copies of a share list: fit through (alphas, shares), read betas.

    Returns len(betas) = copies * len(shares) vectors, copy-major.
    """
    n = len(shares)
    if n != len(pts.alphas):
        raise ValueError(f"{n} shares for {len(pts.alphas)} alpha points")
    known = list(zip(pts.alphas, shares))
    return [interpolate_eval(known, b) for b in pts.betas]


def recover_missing(
    known: Sequence[tuple[int, np.ndarray]],
    degree_bound: int,
    targets: Sequence[int],
) -> list[np.ndarray]:
    """Values at `targets` of the degree < degree_bound polynomial.

    All supplied evaluations are consumed; with more than degree_bound of
    them the fit is overdetermined but exact whenever they are consistent.
    Raises InsufficientEvaluations below the threshold -- the abort signal.
    """
    if len(known) < degree_bound:
        raise InsufficientEvaluations(
            f"{len(known)} evaluations but degree bound {degree_bound}"
        )
    _check_distinct([p for p, _ in known])
    return [interpolate_eval(known, t) for t in targets]
