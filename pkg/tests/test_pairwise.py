import numpy as np
import pytest

from circagg import pairwise
from circagg.field import derive_seed, prg, vec, vec_add, vec_sub, vec_sum
from circagg.net import RoundMetrics
from circagg.sharing import BadThreshold, InsufficientShares, shamir_reconstruct


def _models(seed, n, d=3):
    return [prg(derive_seed(seed, u), d) for u in range(n)]


def test_setup_seed_counts():
    st = pairwise.setup(2, 2, seed=1)
    assert len(st.pair_seeds) == 1 and len(st.self_seeds) == 2
    st = pairwise.setup(5, 3, seed=1)
    assert len(st.pair_seeds) == 10
    assert st.n_seeds == 15


def test_setup_threshold_validation():
    with pytest.raises(BadThreshold):
        pairwise.setup(4, 1, seed=1)
    with pytest.raises(BadThreshold):
        pairwise.setup(4, 5, seed=1)


def test_every_seed_share_roundtrips():
    n, t = 5, 3
    st = pairwise.setup(n, t, seed=9)
    for key, seed_val in st.pair_seeds.items():
        for start in range(n - t + 1):
            got = shamir_reconstruct(st.pair_shares[key][start : start + t], t)
            assert pairwise._vec_to_seed(got) == seed_val
    for u, seed_val in st.self_seeds.items():
        got = shamir_reconstruct(st.self_shares[u][:t], t)
        assert pairwise._vec_to_seed(got) == seed_val


def test_single_user_mask_is_self_stream_only():
    st = pairwise.PairwiseState(
        n_users=1, threshold=1, pair_seeds={}, self_seeds={0: 77},
        pair_shares={}, self_shares={},
    )
    x = vec([5, 6])
    y = pairwise.mask_model(0, x, st)
    assert np.array_equal(y, vec_add(x, prg(77, 2)))


def test_mask_matches_direct_formula():
    # Recompute each masked model straight from the dealt seeds.
    n, d = 3, 2
    st = pairwise.setup(n, 2, seed=4)
    models = _models(4, n, d)
    for u in range(n):
        expect = vec_add(models[u], prg(st.self_seeds[u], d))
        for v in range(u + 1, n):
            expect = vec_add(expect, prg(st.pair_seeds[(u, v)], d))
        for v in range(u):
            expect = vec_sub(expect, prg(st.pair_seeds[(v, u)], d))
        assert np.array_equal(pairwise.mask_model(u, models[u], st), expect)


def test_pairwise_terms_telescope():
    n, d = 6, 4
    st = pairwise.setup(n, 4, seed=8)
    models = _models(8, n, d)
    ys = [pairwise.mask_model(u, models[u], st) for u in range(n)]
    total = vec_sum(ys)
    for u in range(n):
        total = vec_sub(total, prg(st.self_seeds[u], d))
    assert np.array_equal(total, vec_sum(models))


@pytest.mark.parametrize("n", [4, 7, 12])
def test_unmask_oracle_and_stream_count(n):
    t = n // 2 + 1
    st = pairwise.setup(n, t, seed=n)
    models = _models(n, n)
    ys = {u: pairwise.mask_model(u, models[u], st) for u in range(n)}
    for n_drop in range(n - t + 1):
        dropped = set(range(0, 2 * n_drop, 2))  # every other user, n_drop of them
        m = RoundMetrics()
        got = pairwise.unmask_aggregate(
            {u: ys[u] for u in ys if u not in dropped}, dropped, st, t, m
        )
        oracle = vec_sum(
            [models[u] for u in range(n) if u not in dropped], dim=3
        )
        assert np.array_equal(got, oracle)
        assert m.prg_streams == (n - n_drop) + n_drop * (n - n_drop)


def test_unmask_threshold():
    st = pairwise.setup(4, 3, seed=2)
    models = _models(2, 4)
    ys = {u: pairwise.mask_model(u, models[u], st) for u in range(4)}
    got = pairwise.unmask_aggregate(
        {u: ys[u] for u in (0, 1, 2)}, {3}, st, 3
    )
    assert np.array_equal(got, vec_sum(models[:3]))
    with pytest.raises(InsufficientShares):
        pairwise.unmask_aggregate({0: ys[0], 1: ys[1]}, {2, 3}, st, 3)


def test_survivor_dropped_overlap_rejected():
    st = pairwise.setup(4, 3, seed=2)
    models = _models(2, 4)
    ys = {u: pairwise.mask_model(u, models[u], st) for u in range(4)}
    with pytest.raises(ValueError):
        pairwise.unmask_aggregate(ys, {0}, st, 3)


def test_volume_helpers():
    assert pairwise.masked_upload_volume(10, 7) == 70
    assert pairwise.seed_share_count(10) == 100
