import itertools

import numpy as np
import pytest

from circagg.engine import (
    Mode,
    ProtocolConfig,
    Seeds,
    StageMessage,
    UserState,
    build_tree_schedule,
    final_stage_aggregate,
    reconstruct_group_sums,
    run_generalized_mask_pipeline,
    run_round,
    server_finalize,
    tree_merge,
    user_emit_stage,
)
from circagg.field import PrgStream, derive_seed, prg, vec, vec_add, vec_scale, vec_sum, zeros
from circagg.grouping import partition
from circagg.lagrange import EvalPoints
from circagg.net import inject_dropouts


def _models(seed, n, d):
    return [prg(derive_seed(seed, 2000, i), d) for i in range(n)]


def _oracle(models, dropouts):
    keep = [m for i, m in enumerate(models) if i not in dropouts]
    return vec_sum(keep, dim=len(models[0]))


def _config(n, ng, d=4, mode="sequential", k=1, master=7, **kw):
    return ProtocolConfig(
        n_users=n,
        group_size=ng,
        dim=d,
        redundancy=k,
        mode=Mode(mode),
        seeds=Seeds.from_master(master),
        **kw,
    )


def _fresh_state(uid, model, mask, k=1):
    d = len(model)
    return UserState(
        user_id=uid,
        group_index=0,
        member_index=uid,
        model=model,
        mask=mask,
        s_plain=zeros(d),
        s_coded=[zeros(d) for _ in range(k)],
    )


# ---------------------------------------------------------------------------
# Per-user operations
# ---------------------------------------------------------------------------


def test_first_group_emits_zero_running_sums():
    state = _fresh_state(0, vec([3, 4]), vec([1, 1]))
    pts = EvalPoints.standard(3)
    msgs = user_emit_stage(state, 3, pts, seed=5)
    assert len(msgs) == 3
    for m in msgs:
        assert list(m.s_plain) == [0, 0]
        assert list(m.s_coded[0]) == [0, 0]
    # Shares sum to n * (x + u).
    total = vec_sum([m.x_masked for m in msgs])
    assert list(total) == [12, 15]


def test_single_recipient_share_is_unmasked_by_randomness():
    state = _fresh_state(0, vec([0, 0]), vec([0, 0]))
    msgs = user_emit_stage(state, 1, EvalPoints.standard(1), seed=9)
    assert list(msgs[0].x_masked) == [0, 0]


def test_zero_inputs_give_zero_mean_at_next_group():
    # With all models and masks zero the share randomness still scatters
    # the per-receiver sums, but their group mean vanishes.
    d, n = 2, 3
    pts = EvalPoints.standard(n)
    senders = [_fresh_state(i, zeros(d), zeros(d)) for i in range(n)]
    messages = [user_emit_stage(s, n, pts, seed=100 + i) for i, s in enumerate(senders)]
    receiver_sums = []
    for j in range(n):
        inbox = [messages[i][j] for i in range(n)]
        rec = _fresh_state(10 + j, zeros(d), zeros(d))
        tree_merge(rec, inbox, n, pts, source_mean=zeros(d))
        receiver_sums.append(rec.s_plain)
    assert list(vec_scale(pow(n, -1, 2**32 - 5), vec_sum(receiver_sums))) == [0, 0]


def test_reconstruct_passthrough_without_dropouts():
    pts = EvalPoints.standard(3)
    msgs = []
    for i in range(3):
        msgs.append(
            StageMessage(
                sender=i,
                x_masked=vec([0]),
                x_coded=[vec([0])],
                s_plain=vec([i + 10]),
                s_coded=[vec([99])],
            )
        )
    full = reconstruct_group_sums(msgs, 3, pts, {0: 0, 1: 1, 2: 2})
    assert [list(v) for v in full] == [[10], [11], [12]]


def test_reconstruct_recovers_dropped_member():
    # Running sums lie on one polynomial; drop one member and rebuild it.
    pts = EvalPoints.standard(3)
    coeffs = [vec([5]), vec([7]), vec([2])]

    def poly(x):
        acc = zeros(1)
        for c in reversed(coeffs):
            acc = vec_add(vec_scale(x, acc), c)
        return acc

    msgs = [
        StageMessage(
            sender=i,
            x_masked=vec([0]),
            x_coded=[vec([0])],
            s_plain=poly(pts.alpha(i)),
            s_coded=[poly(pts.beta(0, i))],
        )
        for i in (0, 1)  # member 2 dropped
    ]
    full = reconstruct_group_sums(msgs, 3, pts, {0: 0, 1: 1})
    assert np.array_equal(full[2], poly(pts.alpha(2)))


def test_final_stage_over_single_fresh_group():
    # A lone group feeding the finalists: running sums are still zero, so
    # each finalist's total is exactly the sum of the shares sent to it.
    n, d = 3, 2
    pts = EvalPoints.standard(n)
    senders = [
        _fresh_state(i, vec([i + 1, 2 * i]), vec([5, 5])) for i in range(n)
    ]
    emitted = [user_emit_stage(s, n, pts, seed=300 + i) for i, s in enumerate(senders)]
    received = [(j, emitted[i][j]) for i in range(n) for j in range(n)]
    uploads = final_stage_aggregate(received, n, pts, {i: i for i in range(n)}, n)
    for j, (plain, coded) in enumerate(uploads):
        share_sum = vec_sum([emitted[i][j].x_masked for i in range(n)])
        assert np.array_equal(plain, share_sum)
        assert len(coded) == 1
    # Averaging the finalists' totals recovers sum(x + u): the share
    # randomness cancels across slots.
    total = vec_sum([u[0] for u in uploads])
    expect = vec_scale(
        n, vec_sum([vec_add(s.model, s.mask) for s in senders])
    )
    assert np.array_equal(total, expect)


def test_server_finalize_recovers_missing_slot():
    pts = EvalPoints.standard(3)
    coeffs = [vec([1, 2]), vec([3, 4]), vec([5, 6])]

    def poly(x):
        acc = zeros(2)
        for c in reversed(coeffs):
            acc = vec_add(vec_scale(x, acc), c)
        return acc

    finals = [
        (j, poly(pts.alpha(j)), [poly(pts.beta(0, j))]) for j in (0, 2)
    ]
    got = server_finalize(finals, 3, zeros(2), pts)
    expect = vec_scale(
        pow(3, -1, 2**32 - 5), vec_sum([poly(pts.alpha(j)) for j in range(3)])
    )
    assert np.array_equal(got, expect)


# ---------------------------------------------------------------------------
# Tree schedule
# ---------------------------------------------------------------------------


def test_tree_schedule_examples():
    assert build_tree_schedule(8) == [
        [(1, 2), (3, 4), (5, 6), (7, 8)],
        [(2, 4), (6, 8)],
        [(4, 8)],
    ]
    assert build_tree_schedule(2) == [[(1, 2)]]
    assert build_tree_schedule(5) == [[(1, 2), (3, 4)], [(2, 4)], [(4, 5)]]


@pytest.mark.parametrize("n_groups", range(2, 17))
def test_tree_schedule_validity(n_groups):
    rounds = build_tree_schedule(n_groups)
    senders = [s for rnd in rounds for s, _ in rnd]
    # Every group but the last sends exactly once.
    assert sorted(senders) == list(range(1, n_groups))
    # Pairs within a round are disjoint.
    for rnd in rounds:
        touched = [g for pair in rnd for g in pair]
        assert len(touched) == len(set(touched))
    # The merge graph is a tree flowing into the last group.
    dst_of = {s: d for rnd in rounds for s, d in rnd}
    for g in range(1, n_groups):
        seen = set()
        while g != n_groups:
            assert g not in seen
            seen.add(g)
            g = dst_of[g]


# ---------------------------------------------------------------------------
# Full rounds
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["sequential", "tree", "generalized"])
def test_no_dropouts_sums_everything(mode):
    models = _models(1, 12, 4)
    cfg = _config(12, 3, mode=mode)
    res = run_round(cfg, models, set(), plaintext_check=True)
    assert res.ok
    assert np.array_equal(res.aggregate, _oracle(models, set()))
    assert res.survivors == set(range(12))


def test_minimal_two_group_instance():
    models = _models(3, 4, 1)
    cfg = _config(4, 2, d=1, master=11)
    res = run_round(cfg, models, set(), plaintext_check=True)
    assert res.ok
    assert np.array_equal(res.aggregate, _oracle(models, set()))


def test_golden_nine_user_round():
    cfg = _config(9, 3, d=4, master=7)
    models = _models(5, 9, 4)
    asn = partition(9, 3, cfg.seeds.partition)
    drop = {asn.groups[1][2]}  # third member of the middle group
    res = run_round(cfg, models, drop, plaintext_check=True)
    assert res.ok
    assert np.array_equal(res.aggregate, _oracle(models, drop))
    # Exactly one recovery, consuming the four surviving evaluations.
    assert res.metrics.decode_events == [(4, 1)]
    assert res.metrics.decode_ops == 4


@pytest.mark.parametrize("mode", ["sequential", "tree", "generalized"])
@pytest.mark.parametrize("k", [1, 2])
def test_mode_equivalence_and_oracle(mode, k):
    stream = PrgStream(17)
    results = {}
    for n, ng, p in ((9, 3, 1 / 3), (16, 4, 0.3), (25, 4, 0.26)):
        master = stream.next_element()
        cfg = _config(n, ng, d=8, mode=mode, k=k, master=master)
        models = _models(master, n, 8)
        asn = partition(n, ng, cfg.seeds.partition)
        drop = inject_dropouts(asn, p, derive_seed(master, 3))
        res = run_round(cfg, models, drop, plaintext_check=True)
        assert res.ok
        assert np.array_equal(res.aggregate, _oracle(models, drop))


def test_modes_agree_on_identical_instances():
    # The generalized mode may honestly abort when the second partition
    # concentrates the same global dropouts past its Shamir threshold, so
    # compare only instances every mode completes.
    agreed = 0
    for n, ng in ((16, 4), (20, 4), (28, 4)):  # 4, 5, and 7 groups
        models = _models(n, n, 2)
        for drop_seed in range(8):
            cfgs = {m: _config(n, ng, d=2, mode=m, master=31) for m in Mode}
            asn = partition(n, ng, cfgs[Mode.SEQUENTIAL].seeds.partition)
            drop = inject_dropouts(asn, 0.26, drop_seed)
            results = {m: run_round(cfg, models, drop) for m, cfg in cfgs.items()}
            for m, res in results.items():
                if not res.ok:
                    assert m is Mode.GENERALIZED
                    assert res.abort.reason == "insufficient_shares"
            if all(res.ok for res in results.values()):
                aggs = [res.aggregate for res in results.values()]
                assert all(np.array_equal(aggs[0], a) for a in aggs[1:])
                agreed += 1
    assert agreed >= 8


def test_masking_neutrality():
    models = _models(2, 9, 3)
    base = _config(9, 3, d=3, master=40)
    other = ProtocolConfig(
        n_users=9,
        group_size=3,
        dim=3,
        seeds=Seeds(
            partition=base.seeds.partition,
            masks=derive_seed(base.seeds.masks, 1),
            dropout=base.seeds.dropout,
        ),
    )
    trace_a, trace_b = [], []
    res_a = run_round(base, models, set(), trace=trace_a)
    res_b = run_round(other, models, set(), trace=trace_b)
    assert np.array_equal(res_a.aggregate, res_b.aggregate)
    # Every transfer payload changed with the mask seed.
    digests_a = [t["digest"] for t in trace_a if t["label"] == "transfer"]
    digests_b = [t["digest"] for t in trace_b if t["label"] == "transfer"]
    assert len(digests_a) == len(digests_b)
    assert all(da != db for da, db in zip(digests_a, digests_b))


def test_determinism_bit_exact():
    models = _models(6, 16, 4)
    drop = {1, 5}
    a = run_round(_config(16, 4, master=3), models, drop)
    b = run_round(_config(16, 4, master=3), models, drop)
    assert np.array_equal(a.aggregate, b.aggregate)
    assert a.metrics.field_elems_sent == b.metrics.field_elems_sent
    assert a.metrics.simulated_time_ms == b.metrics.simulated_time_ms


@pytest.mark.parametrize("mode", ["sequential", "tree"])
@pytest.mark.parametrize("n_g,k", [(2, 1), (3, 1), (3, 2), (4, 2)])
def test_threshold_edges(mode, n_g, k):
    n = 3 * n_g
    limit = (n_g * k) // (k + 1)
    cfg = _config(n, n_g, d=1, mode=mode, k=k, master=50)
    models = _models(50, n, 1)
    asn = partition(n, n_g, cfg.seeds.partition)
    at_limit = {u for g in asn.groups for u in g[:limit]}
    res = run_round(cfg, models, at_limit)
    assert res.ok
    assert np.array_equal(res.aggregate, _oracle(models, at_limit))
    over = set(at_limit) | set(asn.groups[0][: limit + 1])
    res = run_round(cfg, models, over)
    assert not res.ok
    assert res.abort.reason == "insufficient_evaluations"
    assert res.abort.group == 0


def test_generalized_mask_pipeline_direct():
    cfg = _config(9, 3, d=2, mode="generalized", master=61)
    zeros_masks = {i: zeros(2) for i in range(9)}
    out = run_generalized_mask_pipeline(cfg, zeros_masks, set())
    assert list(out) == [0, 0]
    masks = {i: prg(derive_seed(1, i), 2) for i in range(9)}
    out = run_generalized_mask_pipeline(cfg, masks, set())
    assert np.array_equal(out, vec_sum(list(masks.values())))
    drop = {0, 4}
    out = run_generalized_mask_pipeline(cfg, masks, drop)
    assert np.array_equal(
        out, vec_sum([masks[i] for i in range(9) if i not in drop], dim=2)
    )


def test_generalized_abort_on_mask_carrier_loss():
    # Drop a majority of one second-partition group; redundancy k=2 keeps
    # the model pipeline alive so the mask pipeline must raise the abort.
    from circagg.engine import _TAG_SECOND_PARTITION

    cfg = _config(9, 3, d=2, mode="generalized", k=2, master=71)
    asn2 = partition(9, 3, derive_seed(cfg.seeds.partition, _TAG_SECOND_PARTITION))
    drop = set(asn2.groups[1][:2])  # group 1 receives group 0's mask shares
    models = _models(71, 9, 2)
    res = run_round(cfg, models, drop)
    assert not res.ok
    assert res.abort.reason == "insufficient_shares"
    assert res.abort.group == 1


def test_final_stage_falls_back_when_first_group_is_short():
    # Half of every size-2 group dropped: fewer group-one survivors than
    # requested finalists, so the finalist set shrinks to the survivors.
    cfg = _config(8, 2, d=1, master=80, n_final=4)
    models = _models(80, 8, 1)
    asn = partition(8, 2, cfg.seeds.partition)
    drop = {g[0] for g in asn.groups}
    res = run_round(cfg, models, drop)
    assert res.ok
    assert np.array_equal(res.aggregate, _oracle(models, drop))


def test_exact_or_abort_under_arbitrary_dropouts():
    # Safety net over arbitrary configurations and dropout sets (including
    # ones far past every threshold): a round either returns the exact
    # survivor sum or aborts with a named group -- never a wrong value.
    import random

    rng = random.Random(424242)
    ok = aborted = 0
    for _ in range(250):
        n = rng.randint(4, 40)
        ng = min(rng.randint(2, max(2, n // 2)), n // 2)
        k = rng.choice([1, 1, 2, 3])
        mode = rng.choice(list(Mode))
        n_final = rng.choice([None, 1, ng, ng + 2])
        master = rng.getrandbits(63)
        cfg = _config(n, ng, d=2, mode=mode, k=k, master=master, n_final=n_final)
        models = _models(master, n, 2)
        drop = set(rng.sample(range(n), rng.randint(0, n - 1)))
        res = run_round(cfg, models, drop)
        if res.ok:
            ok += 1
            assert np.array_equal(res.aggregate, _oracle(models, drop))
        else:
            aborted += 1
            asn = partition(n, ng, cfg.seeds.partition)
            assert 0 <= res.abort.group < asn.n_groups
            assert res.abort.reason in (
                "insufficient_evaluations",
                "insufficient_shares",
            )
    assert ok > 50 and aborted > 50  # both paths genuinely exercised


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(n_users=5, group_size=3, dim=1)
    with pytest.raises(ValueError):
        ProtocolConfig(n_users=8, group_size=2, dim=0)
    with pytest.raises(ValueError):
        ProtocolConfig(n_users=8, group_size=2, dim=1, dropout_rate=0.6)
    # Boundary rate k/(k+1) is accepted.
    ProtocolConfig(n_users=8, group_size=2, dim=1, dropout_rate=0.5)
    ProtocolConfig(n_users=8, group_size=2, dim=1, dropout_rate=0.6, redundancy=2)
    with pytest.raises(ValueError):
        ProtocolConfig(n_users=8, group_size=2, dim=1, redundancy=0)


def test_trace_records_structure():
    trace = []
    models = _models(9, 9, 2)
    run_round(_config(9, 3, d=2, master=90), models, set(), trace=trace)
    assert trace, "trace should not be empty"
    labels = {t["label"] for t in trace}
    assert {"transfer", "final", "upload"} <= labels
    for rec in trace:
        assert set(rec) == {"stage", "label", "sender", "receiver", "digest"}
        assert len(rec["digest"]) == 16
