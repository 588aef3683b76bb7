"""User partitioning, group sizing, and the Bernoulli KL divergence.

Group size follows the log-of-population rule: (1/c) * log N where c is the
smaller of the two KL exponents governing dropout failure and collusion,
with the plain ceil(log N) experimental default when both rates are zero.
Logs are natural; an override base is accepted since the sizing rule is
base-sensitive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .field import PrgStream


class DomainError(ValueError):
    """Parameter outside the domain a formula is defined on."""


class TooFewUsers(ValueError):
    """Population too small for the requested group size."""


@dataclass
class GroupAssignment:
    """Partition of users 0..N-1 into groups, with per-group dropout sets."""

    groups: list[list[int]]
    dropped: list[set[int]] = field(default_factory=list)
    surviving: list[set[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.dropped:
            self.dropped = [set() for _ in self.groups]
        if not self.surviving:
            self.surviving = [set(g) for g in self.groups]

    @property
    def n_users(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups]

    def group_of(self, user: int) -> int:
        for gi, g in enumerate(self.groups):
            if user in g:
                return gi
        raise KeyError(user)

    def mark_dropped(self, users: set[int]) -> None:
        """Record a global dropout set against every group."""
        for gi, g in enumerate(self.groups):
            self.dropped[gi] = {u for u in g if u in users}
            self.surviving[gi] = {u for u in g if u not in users}


def kl_bernoulli(a: float, b: float) -> float:
    """KL divergence (nats) between Bernoulli(a) and Bernoulli(b)."""
    if not 0.0 < b < 1.0:
        raise DomainError(f"b must be in (0, 1), got {b}")
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"a must be in [0, 1], got {a}")
    out = 0.0
    if a > 0.0:
        out += a * math.log(a / b)
    if a < 1.0:
        out += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return out


def group_size(
    n_users: int, p: float, t_frac: float, log_base: float = math.e
) -> int:
    """Group size (1/c) * log N, c = min KL exponent; >= 2 always.

    With p = t_frac = 0 both exponents diverge, so the experimental default
    ceil(log N) applies.
    """
    if n_users < 4:
        raise DomainError("need at least 4 users")
    for name, v in (("p", p), ("t_frac", t_frac)):
        if not 0.0 <= v < 0.5:
            raise DomainError(f"{name} must be in [0, 0.5), got {v}")
    log_n = math.log(n_users, log_base)
    if p == 0.0 and t_frac == 0.0:
        return max(2, math.ceil(log_n))
    c = min(
        kl_bernoulli(0.5, p) if p > 0.0 else math.inf,
        kl_bernoulli(0.5, t_frac) if t_frac > 0.0 else math.inf,
    )
    return max(2, math.ceil(log_n / c))


def partition(n_users: int, size: int, seed: int) -> GroupAssignment:
    """Uniform random partition into floor(N / size) groups.

    Fisher-Yates on the PRG stream.  Leftover users are spread one each over
    the first groups, so every user is placed and group sizes differ by at
    most 1 (sizes are ceil or floor of N / L, L = floor(N / size)).
    """
    if size < 1:
        raise ValueError("group size must be >= 1")
    if n_users < 2 * size:
        raise TooFewUsers(f"{n_users} users cannot form two groups of {size}")
    order = list(range(n_users))
    stream = PrgStream(seed)
    for i in range(n_users - 1, 0, -1):
        j = stream.next_below(i + 1)
        order[i], order[j] = order[j], order[i]
    n_groups = n_users // size
    base, extra = divmod(n_users, n_groups)
    groups = []
    at = 0
    for gi in range(n_groups):
        take = base + (1 if gi < extra else 0)
        groups.append(order[at : at + take])
        at += take
    return GroupAssignment(groups=groups)
