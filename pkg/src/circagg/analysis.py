"""Closed-form failure/privacy/robustness bounds and Monte Carlo checks.

The protocol survives a round when every group keeps at least half of its
members (with k coded copies, a k/(k+1) fraction).  Group failure counts
are binomial, so tail bounds come out as KL-divergence exponents; this
module evaluates those bounds and estimates the true probabilities by
simulation.  Bounds can exceed 1 for small populations (they are
asymptotic), so everything is clamped into [0, 1] on output.

Monte Carlo draws use numpy's seeded Generator: group failure only depends
on per-group dropout counts, which are binomial, so trials never need to
simulate actual protocol rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grouping import DomainError, kl_bernoulli

_Z95 = 1.959963984540054


def _kl_exponent(a: float, b: float) -> float:
    """kl_bernoulli extended by its b -> 0 limit (+inf, i.e. bound 0)."""
    if b == 0.0:
        return math.inf
    return kl_bernoulli(a, b)


def _group_sizes(n_users: int, group_size: int) -> list[int]:
    # Mirrors grouping.partition: L = floor(N / size) groups whose sizes are
    # ceil or floor of N / L, so every user is counted.
    n_groups = n_users // group_size
    base, extra = divmod(n_users, n_groups)
    return [base + (1 if g < extra else 0) for g in range(n_groups)]


def failure_bound(n_users: int, group_size: int, p: float) -> float:
    """Union bound on the probability that any group loses over half.

    (N / N_g) * exp(-c_p * N_g) with c_p the KL distance from the exact
    per-group failure fraction (floor(N_g/2) + 1) / N_g to p.
    """
    if not 0.0 <= p < 0.5:
        raise DomainError(f"p must be in [0, 0.5), got {p}")
    c_p = _kl_exponent((group_size // 2 + 1) / group_size, p)
    if math.isinf(c_p):
        return 0.0
    return min(1.0, (n_users / group_size) * math.exp(-c_p * group_size))


def privacy_bound(n_users: int, group_size: int, colluders: int) -> float:
    """Union bound on any group being half-filled with colluders.

    (N / N_g) * exp(-c_T * N_g) with c_T = KL(1/2 || T/N).
    """
    if not 0 <= colluders < n_users / 2:
        raise DomainError(f"colluders must be in [0, N/2), got {colluders}")
    c_t = _kl_exponent(0.5, colluders / n_users)
    if math.isinf(c_t):
        return 0.0
    return min(1.0, (n_users / group_size) * math.exp(-c_t * group_size))


def robustness_converse_bound(n_users: int, p: float) -> float:
    """Upper bound on all-groups-survive probability at log-sized groups.

    (1 - N^(-c') / (log N + 1)) ** (N / log N) with c' = KL(1/2 || p); only
    defined on the regime 0 < c' < 1, where it tends to 0 as N grows.
    """
    if not 0.0 < p < 1.0 or p == 0.5:
        raise DomainError(f"p must be in (0, 1) \\ {{0.5}}, got {p}")
    c = kl_bernoulli(0.5, p)
    if not 0.0 < c < 1.0:
        raise DomainError(f"KL(0.5||p) = {c:.4f} outside the regime (0, 1)")
    log_n = math.log(n_users)
    b = (1.0 - n_users ** (-c) / (log_n + 1.0)) ** (n_users / log_n)
    return min(1.0, max(0.0, b))


def wilson_interval(successes: int, trials: int) -> tuple[float, float]:
    """Wilson 95% interval (lo, hi) for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    z2 = _Z95 * _Z95
    phat = successes / trials
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = (
        _Z95
        * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials))
        / denom
    )
    return max(0.0, center - half), min(1.0, center + half)


def _dropout_counts(
    sizes: list[int], p: float, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """trials x len(sizes) matrix of per-group binomial dropout counts."""
    return rng.binomial(np.array(sizes), p, size=(trials, len(sizes)))


def monte_carlo_failure(
    n_users: int,
    group_size: int,
    p: float,
    trials: int,
    seed: int,
) -> tuple[float, float]:
    """Estimated probability that some group loses over half its members.

    Returns (estimate, ci95) where ci95 is the Wilson interval half-width.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = _group_sizes(n_users, group_size)
    rng = np.random.default_rng(seed)
    counts = _dropout_counts(sizes, p, trials, rng)
    limits = np.array([s // 2 + 1 for s in sizes])
    failures = int(np.count_nonzero((counts >= limits).any(axis=1)))
    lo, hi = wilson_interval(failures, trials)
    return failures / trials, (hi - lo) / 2.0


def monte_carlo_log_survival(
    n_users: int,
    group_size: int,
    p: float,
    trials: int,
    seed: int,
) -> float:
    """Log of the all-groups-survive probability, product-form estimate.

    Per-user dropouts are independent, so survival events are independent
    across groups and the all-survive probability factors into per-group
    survival probabilities.  Estimating each factor from the same trials and
    multiplying keeps the estimate strictly positive far into the regime
    where the plain indicator estimate would record zero successes, which is
    what a monotone-trend check over widely spaced N needs.  Returns -inf
    only if some group survived no trial at all.
    """
    sizes = _group_sizes(n_users, group_size)
    rng = np.random.default_rng(seed)
    counts = _dropout_counts(sizes, p, trials, rng)
    limits = np.array([s // 2 + 1 for s in sizes])
    survived = (counts < limits).sum(axis=0)  # per-group survival counts
    if np.any(survived == 0):
        return -math.inf
    return float(np.sum(np.log(survived / trials)))


@dataclass
class BoundsReport:
    n_users: int
    group_size: int
    p: float
    colluders: int
    c_p: float
    c_t: float
    failure: float
    privacy: float
    robustness_converse: float | None
    empirical_failure: float
    empirical_ci95: float

    def as_record(self) -> dict:
        # Divergent KL exponents (rate 0) serialize as null: strict JSON
        # has no Infinity literal.
        finite = lambda v: v if v is None or math.isfinite(v) else None
        return {
            "N": self.n_users,
            "N_g": self.group_size,
            "p": self.p,
            "T": self.colluders,
            "c_p": finite(self.c_p),
            "c_T": finite(self.c_t),
            "B_failure": self.failure,
            "B_privacy": self.privacy,
            "B_robustness_converse": self.robustness_converse,
            "empirical_failure": self.empirical_failure,
            "empirical_ci95": self.empirical_ci95,
        }


def bounds_report(
    n_users: int,
    group_size: int,
    p: float,
    colluders: int,
    trials: int = 2000,
    seed: int = 0,
) -> BoundsReport:
    """Evaluate every bound at one parameter point, with an empirical check."""
    est, ci = monte_carlo_failure(n_users, group_size, p, trials, seed)
    try:
        converse = robustness_converse_bound(n_users, p)
    except DomainError:
        converse = None
    return BoundsReport(
        n_users=n_users,
        group_size=group_size,
        p=p,
        colluders=colluders,
        c_p=_kl_exponent((group_size // 2 + 1) / group_size, p),
        c_t=_kl_exponent(0.5, colluders / n_users),
        failure=failure_bound(n_users, group_size, p),
        privacy=privacy_bound(n_users, group_size, colluders),
        robustness_converse=converse,
        empirical_failure=est,
        empirical_ci95=ci,
    )
