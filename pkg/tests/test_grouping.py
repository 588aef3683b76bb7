import math

import pytest

from circagg.grouping import (
    DomainError,
    TooFewUsers,
    group_size,
    kl_bernoulli,
    partition,
)


def test_kl_identical_is_zero():
    assert kl_bernoulli(0.5, 0.5) == 0.0


def test_kl_known_value():
    assert abs(kl_bernoulli(0.5, 0.1) - 0.5108) < 1e-3


def test_kl_nonnegative_randomized():
    import random

    rng = random.Random(5)
    for _ in range(200):
        a, b = rng.random(), min(max(rng.random(), 1e-9), 1 - 1e-9)
        assert kl_bernoulli(a, b) >= 0.0


def test_kl_edge_conventions():
    # 0 log 0 = 0 conventions at a in {0, 1}.
    assert kl_bernoulli(0.0, 0.3) == pytest.approx(math.log(1 / 0.7))
    assert kl_bernoulli(1.0, 0.3) == pytest.approx(math.log(1 / 0.3))


def test_kl_domain_errors():
    for b in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(DomainError):
            kl_bernoulli(0.5, b)
    with pytest.raises(DomainError):
        kl_bernoulli(-0.2, 0.5)


def test_group_size_experimental_default():
    assert group_size(200, 0.0, 0.0) == 6  # ceil(ln 200)


def test_group_size_formula():
    assert group_size(100, 0.1, 0.1) == 10  # ceil(ln(100) / 0.5108)


def test_group_size_monotone_in_p():
    prev = 0
    for p in (0.0, 0.1, 0.2, 0.3, 0.4, 0.45):
        cur = group_size(1000, p, 0.0)
        assert cur >= prev
        prev = cur


def test_group_size_domain():
    with pytest.raises(DomainError):
        group_size(100, 0.5, 0.0)
    with pytest.raises(DomainError):
        group_size(100, 0.0, 0.6)
    with pytest.raises(DomainError):
        group_size(3, 0.0, 0.0)
    assert group_size(4, 0.0, 0.0) >= 2


def test_group_size_log_base_override():
    assert group_size(256, 0.0, 0.0, log_base=2) == 8


def test_partition_9_into_3():
    asn = partition(9, 3, seed=5)
    assert asn.sizes == [3, 3, 3]
    assert sorted(u for g in asn.groups for u in g) == list(range(9))
    assert asn.dropped == [set(), set(), set()]
    assert asn.surviving == [set(g) for g in asn.groups]


def test_partition_remainder_rule():
    assert partition(10, 3, seed=1).sizes == [4, 3, 3]
    assert partition(23, 4, seed=1).sizes == [5, 5, 5, 4, 4]
    # Leftovers can outnumber the groups when the size is close to N/2.
    assert partition(37, 17, seed=1).sizes == [19, 18]
    assert partition(11, 4, seed=1).sizes == [6, 5]


def test_partition_places_every_user():
    for n in range(4, 60):
        for size in range(2, n // 2 + 1):
            asn = partition(n, size, seed=n * 100 + size)
            placed = sorted(u for g in asn.groups for u in g)
            assert placed == list(range(n)), (n, size, asn.sizes)
            assert max(asn.sizes) - min(asn.sizes) <= 1, (n, size, asn.sizes)


def test_partition_deterministic():
    a = partition(12, 3, seed=9)
    b = partition(12, 3, seed=9)
    assert a.groups == b.groups
    assert a.groups != partition(12, 3, seed=10).groups


def test_partition_too_few_users():
    with pytest.raises(TooFewUsers):
        partition(5, 3, seed=0)


def test_partition_uniformity():
    # Each of 12 users lands in each of 4 groups with frequency 1/4 +- 0.02.
    trials = 10_000
    counts = [[0] * 4 for _ in range(12)]
    for seed in range(trials):
        asn = partition(12, 3, seed=seed)
        for gi, members in enumerate(asn.groups):
            for u in members:
                counts[u][gi] += 1
    for u in range(12):
        for gi in range(4):
            assert abs(counts[u][gi] / trials - 0.25) < 0.02


def test_mark_dropped():
    asn = partition(9, 3, seed=5)
    dead = {asn.groups[1][0], asn.groups[2][2]}
    asn.mark_dropped(dead)
    assert asn.dropped[1] == {asn.groups[1][0]}
    assert asn.surviving[1] == set(asn.groups[1]) - dead
    assert asn.group_of(asn.groups[2][2]) == 2
