"""Circular-group secure aggregation engine.

One round works group-by-group: every user splits its masked model into
additive shares for the next group, attaches coded copies of those shares
(evaluations of the share-interpolating polynomial at reserve points), and
forwards its running aggregates.  Receivers rebuild any running aggregates
lost to dropped senders from the pooled plain + coded evaluations, fold the
source group's contribution into their own running sums, and the chain ends
with a small set of finalists handing masked totals to the server, which
strips the masks.

Three schedules share that per-edge algebra:

* sequential -- group l feeds group l+1, one stage at a time.
* tree       -- disjoint group pairs merge in parallel rounds; every group
  still transmits exactly once, but the critical path shrinks from L-1
  stages to ceil(log2 L).
* generalized -- same sequential schedule, but masks are user-generated and
  recovered through a second, independent partitioning in which each user
  Shamir-shares its mask forward; the server then learns only per-group
  mask sums, never individual masks.

The worst-case dropout convention applies throughout: a dropped user
consumes everything addressed to it but emits nothing, so its model (and
its mask) never enter the total.

All randomness flows from named seeds, so any legal execution order yields
bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .field import (
    derive_seed,
    inv,
    prg,
    vec,
    vec_add,
    vec_scale,
    vec_sub,
    vec_sum,
    zeros,
)
from .grouping import partition
from .lagrange import EvalPoints, InsufficientEvaluations, encode_shares, recover_missing
from .net import NetParams, RoundMetrics, Transport, simulated_total_time
from .sharing import (
    InsufficientShares,
    ShamirShare,
    make_additive_shares,
    shamir_reconstruct,
    shamir_share,
)


class Mode(str, Enum):
    SEQUENTIAL = "sequential"
    TREE = "tree"
    GENERALIZED = "generalized"


# Seed-derivation tags (arbitrary distinct constants).
_TAG_USER_MASK = 1
_TAG_SHARE_STREAM = 2
_TAG_MASK_SHAMIR = 3
_TAG_SECOND_PARTITION = 4


@dataclass(frozen=True)
class Seeds:
    partition: int
    masks: int
    dropout: int

    @classmethod
    def from_master(cls, master: int) -> "Seeds":
        return cls(
            partition=derive_seed(master, 11),
            masks=derive_seed(master, 12),
            dropout=derive_seed(master, 13),
        )


@dataclass
class ProtocolConfig:
    n_users: int
    group_size: int
    dim: int
    dropout_rate: float = 0.0
    collusion_bound: int = 0  # analysis-only; never touches the round logic
    redundancy: int = 1  # coded copies per share
    mode: Mode = Mode.SEQUENTIAL
    seeds: Seeds = dc_field(default_factory=lambda: Seeds.from_master(0))
    n_final: int | None = None

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.n_users < 2 * self.group_size:
            raise ValueError("need at least two groups of users")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.redundancy < 1:
            raise ValueError("redundancy must be >= 1")
        limit = self.redundancy / (self.redundancy + 1)
        # Equality is allowed: floor(p * N_l) dropouts then sit exactly on
        # the recovery threshold.
        if not 0.0 <= self.dropout_rate <= limit:
            raise ValueError(
                f"dropout_rate must be in [0, {limit}] for redundancy "
                f"{self.redundancy}"
            )
        if self.n_final is None:
            self.n_final = self.group_size
        if self.n_final < 1:
            raise ValueError("n_final must be >= 1")


@dataclass
class StageMessage:
    """Per-edge payload: masked share, its coded copies, running aggregates."""

    sender: int
    x_masked: np.ndarray
    x_coded: list[np.ndarray]
    s_plain: np.ndarray
    s_coded: list[np.ndarray]

    def n_field_elems(self) -> int:
        return (2 + 2 * len(self.x_coded)) * len(self.x_masked)


@dataclass
class UserState:
    user_id: int
    group_index: int
    member_index: int
    model: np.ndarray
    mask: np.ndarray
    s_plain: np.ndarray
    s_coded: list[np.ndarray]
    inbox: list[StageMessage] = dc_field(default_factory=list)


@dataclass(frozen=True)
class Abort:
    group: int  # 0-based index of the group whose data was unrecoverable
    reason: str


@dataclass
class RoundResult:
    aggregate: np.ndarray | None
    survivors: set[int]
    metrics: RoundMetrics
    abort: Abort | None = None

    @property
    def ok(self) -> bool:
        return self.abort is None


class GroupAbort(RuntimeError):
    """A group lost more members than the redundancy can cover."""

    def __init__(self, group: int, reason: str):
        super().__init__(f"group {group}: {reason}")
        self.group = group
        self.reason = reason


# ---------------------------------------------------------------------------
# Per-user operations
# ---------------------------------------------------------------------------


def user_emit_stage(
    state: UserState, next_group_size: int, pts: EvalPoints, seed: int
) -> list[StageMessage]:
    """Messages a user sends to each of the next group's members.

    Message j carries the masked model share for recipient j, that share
    polynomial's coded copies, and the sender's running aggregates.
    """
    shares = make_additive_shares(state.model, state.mask, next_group_size, seed)
    coded = encode_shares(shares, pts.restrict(next_group_size))
    k = pts.copies
    return [
        StageMessage(
            sender=state.user_id,
            x_masked=shares[j],
            x_coded=[coded[m * next_group_size + j] for m in range(k)],
            s_plain=state.s_plain,
            s_coded=list(state.s_coded),
        )
        for j in range(next_group_size)
    ]


def reconstruct_group_sums(
    received: Sequence[StageMessage],
    group_size: int,
    pts: EvalPoints,
    member_index: Mapping[int, int],
    metrics: RoundMetrics | None = None,
) -> list[np.ndarray]:
    """Full list of a source group's running aggregates, missing ones rebuilt.

    `received` holds one message per surviving sender; `member_index` maps
    sender id to its position in the source group (metadata the simulator's
    authenticated channels provide).  Every survivor contributes 1 plain +
    k coded evaluations of the same group polynomial, so recovery succeeds
    exactly when survivors * (1 + k) >= group_size.
    """
    present: dict[int, StageMessage] = {}
    for msg in received:
        present[member_index[msg.sender]] = msg
    missing = [i for i in range(group_size) if i not in present]
    if not missing:
        return [present[i].s_plain for i in range(group_size)]
    known: list[tuple[int, np.ndarray]] = []
    for i in sorted(present):
        known.append((pts.alpha(i), present[i].s_plain))
        for m in range(pts.copies):
            known.append((pts.beta(m, i), present[i].s_coded[m]))
    rebuilt = recover_missing(known, group_size, [pts.alpha(i) for i in missing])
    if metrics is not None:
        metrics.note_decode(len(known), len(missing))
    rebuilt_iter = iter(rebuilt)
    return [
        present[i].s_plain if i in present else next(rebuilt_iter)
        for i in range(group_size)
    ]


def tree_merge(
    receiver: UserState,
    received: Sequence[StageMessage],
    src_group_size: int,
    pts: EvalPoints,
    source_mean: np.ndarray | None = None,
    member_index: Mapping[int, int] | None = None,
    metrics: RoundMetrics | None = None,
) -> UserState:
    """Fold one source group's traffic into a receiver's running sums.

    Adds (mean of the source's running aggregates) + (sum of the shares
    addressed to this receiver) to the plain running sum, and the same mean
    + coded-share sums to each coded running sum.  A receiver starting from
    zero state makes this exactly the sequential-stage update.  `source_mean`
    may be passed in when recovery has already run once for the receiving
    group; otherwise it is recovered here (requires `member_index`).
    """
    if source_mean is None:
        if member_index is None:
            raise ValueError("member_index required to recover the source mean")
        full = reconstruct_group_sums(
            received, src_group_size, pts, member_index, metrics
        )
        source_mean = vec_scale(inv(src_group_size), vec_sum(full))
    dim = len(receiver.s_plain)
    x_sum = vec_sum([m.x_masked for m in received], dim=dim)
    receiver.s_plain = vec_add(receiver.s_plain, vec_add(source_mean, x_sum))
    for m in range(pts.copies):
        coded_sum = vec_sum([msg.x_coded[m] for msg in received], dim=dim)
        receiver.s_coded[m] = vec_add(
            receiver.s_coded[m], vec_add(source_mean, coded_sum)
        )
    return receiver


def final_stage_aggregate(
    received: Sequence[tuple[int, StageMessage]],
    last_group_size: int,
    pts: EvalPoints,
    member_index: Mapping[int, int],
    n_final: int,
    metrics: RoundMetrics | None = None,
) -> list[tuple[np.ndarray, list[np.ndarray]]]:
    """Totals each finalist uploads: one (plain, coded copies) pair per slot.

    `received` pools every (finalist slot, message) the final stage saw:
    n_final messages per surviving last-group sender.
    """
    per_sender: dict[int, dict[int, StageMessage]] = {}
    for slot, msg in received:
        per_sender.setdefault(msg.sender, {})[slot] = msg
    one_each = [slots[0] for slots in per_sender.values()]
    full = reconstruct_group_sums(one_each, last_group_size, pts, member_index, metrics)
    mean = vec_scale(inv(last_group_size), vec_sum(full))
    dim = len(mean)
    out = []
    for j in range(n_final):
        x_sum = vec_sum([per_sender[s][j].x_masked for s in per_sender], dim=dim)
        coded = [
            vec_add(
                mean,
                vec_sum([per_sender[s][j].x_coded[m] for s in per_sender], dim=dim),
            )
            for m in range(pts.copies)
        ]
        out.append((vec_add(mean, x_sum), coded))
    return out


def server_finalize(
    finals: Sequence[tuple[int, np.ndarray, list[np.ndarray]]],
    n_final: int,
    mask_total: np.ndarray,
    pts: EvalPoints,
    metrics: RoundMetrics | None = None,
) -> np.ndarray:
    """Server-side unmasking: average the finalists' totals, strip the masks.

    `finals` holds (slot, plain total, coded totals) from each finalist that
    reported; missing slots are rebuilt from the pooled evaluations.
    """
    present = {slot: plain for slot, plain, _ in finals}
    missing = [j for j in range(n_final) if j not in present]
    if missing:
        known: list[tuple[int, np.ndarray]] = []
        for slot, plain, coded in sorted(finals, key=lambda f: f[0]):
            known.append((pts.alpha(slot), plain))
            for m in range(pts.copies):
                known.append((pts.beta(m, slot), coded[m]))
        rebuilt = recover_missing(known, n_final, [pts.alpha(j) for j in missing])
        if metrics is not None:
            metrics.note_decode(len(known), len(missing))
        present.update(dict(zip(missing, rebuilt)))
    total = vec_sum([present[j] for j in range(n_final)])
    return vec_sub(vec_scale(inv(n_final), total), mask_total)


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


def build_tree_schedule(n_groups: int) -> list[list[tuple[int, int]]]:
    """Recursive-doubling merge rounds over 1-indexed groups.

    Round s pairs every group whose lowest set bit is 2**(s-1) with the
    group 2**(s-1) above it, clamped to the last group.  Each group below
    the last sends exactly once; the last group only receives and later
    feeds the final stage.
    """
    if n_groups < 2:
        raise ValueError("need at least 2 groups")
    rounds = []
    for s in range(1, math.ceil(math.log2(n_groups)) + 1):
        step = 1 << (s - 1)
        pairs = [
            (g, min(g + step, n_groups)) for g in range(step, n_groups, 2 * step)
        ]
        if pairs:
            rounds.append(pairs)
    return rounds


def _schedule(mode: Mode, n_groups: int) -> list[list[tuple[int, int]]]:
    """0-based merge rounds; the last group always feeds the final stage."""
    if mode is Mode.TREE:
        return [
            [(src - 1, dst - 1) for src, dst in rnd]
            for rnd in build_tree_schedule(n_groups)
        ]
    return [[(l, l + 1)] for l in range(n_groups - 1)]


# ---------------------------------------------------------------------------
# Round orchestration
# ---------------------------------------------------------------------------


def run_round(
    config: ProtocolConfig,
    models: Sequence[np.ndarray],
    dropouts: set[int],
    net_params: NetParams | None = None,
    trace: list | None = None,
    plaintext_check: bool = False,
) -> RoundResult:
    """Execute one aggregation round under the configured mode.

    On success the aggregate equals the field sum of the models of every
    user outside `dropouts`.  `plaintext_check` turns on a debug oracle that
    asserts, at every merge, that the recovered source mean equals the
    plaintext partial sums it is supposed to carry.
    """
    if len(models) != config.n_users:
        raise ValueError("need one model per user")
    dropouts = set(dropouts)
    if not dropouts <= set(range(config.n_users)):
        raise ValueError("dropouts must be valid user ids")
    k = config.redundancy
    metrics = RoundMetrics()
    transport = Transport(metrics, trace)

    assignment = partition(config.n_users, config.group_size, config.seeds.partition)
    assignment.mark_dropped(dropouts)
    n_groups = assignment.n_groups
    # The layout must cover the largest group and the finalist slots.
    pts = EvalPoints.standard(max(max(assignment.sizes), config.n_final), k)

    users: dict[int, UserState] = {}
    for gi, members in enumerate(assignment.groups):
        for mi, uid in enumerate(members):
            mask = prg(derive_seed(config.seeds.masks, _TAG_USER_MASK, uid), config.dim)
            metrics.prg_streams += 1
            users[uid] = UserState(
                user_id=uid,
                group_index=gi,
                member_index=mi,
                model=vec(models[uid]),
                mask=mask,
                s_plain=zeros(config.dim),
                s_coded=[zeros(config.dim) for _ in range(k)],
            )
    member_of = {
        gi: {uid: mi for mi, uid in enumerate(members)}
        for gi, members in enumerate(assignment.groups)
    }
    survivors_in = {
        gi: [u for u in assignment.groups[gi] if u not in dropouts]
        for gi in range(n_groups)
    }
    all_survivors = {u for g in survivors_in.values() for u in g}

    # Which groups' plaintext contributions are folded into each group's
    # running aggregates so far (debug oracle only).
    absorbed: list[set[int]] = [set() for _ in range(n_groups)]

    def absorbed_sum(group: int) -> np.ndarray:
        parts = [
            vec_add(users[u].model, users[u].mask)
            for g in sorted(absorbed[group])
            for u in survivors_in[g]
        ]
        return vec_sum(parts, dim=config.dim)

    def emit_group(src: int, recv_ids: Sequence[int], stage, stage_key) -> None:
        for uid in survivors_in[src]:
            seed = derive_seed(config.seeds.masks, _TAG_SHARE_STREAM, uid)
            msgs = user_emit_stage(users[uid], len(recv_ids), pts, seed)
            metrics.prg_streams += 1
            metrics.encode_ops += (k * len(recv_ids)) * len(recv_ids)
            sender_total = 0
            for j, msg in enumerate(msgs):
                n = msg.n_field_elems()
                sender_total += n
                transport.send(stage_key, uid, recv_ids[j], msg, n, stage=stage)
            stage.note_sender(sender_total)

    def merge_into(src: int, dst: int, stage_key) -> None:
        raw = transport.deliver(stage_key)
        if not raw:
            raise GroupAbort(src, "insufficient_evaluations")
        by_receiver: dict[int, list[StageMessage]] = {}
        for _, recv_uid, msg in raw:
            by_receiver.setdefault(recv_uid, []).append(msg)
        sample = by_receiver[min(by_receiver)]
        src_size = len(assignment.groups[src])
        try:
            full = reconstruct_group_sums(sample, src_size, pts, member_of[src], metrics)
        except InsufficientEvaluations as exc:
            raise GroupAbort(src, "insufficient_evaluations") from exc
        mean = vec_scale(inv(src_size), vec_sum(full))
        if plaintext_check:
            assert np.array_equal(mean, absorbed_sum(src)), "partial-sum identity broken"
        for uid in survivors_in[dst]:
            users[uid].inbox = by_receiver[uid]
            tree_merge(users[uid], users[uid].inbox, src_size, pts, source_mean=mean)
        absorbed[dst] |= absorbed[src] | {src}

    try:
        schedule = _schedule(config.mode, n_groups)
        for stage_no, pairs in enumerate(schedule):
            for src, dst in pairs:
                if not survivors_in[src]:
                    raise GroupAbort(src, "insufficient_evaluations")
                # One record per pair; pairs in a round share a stage index
                # and may run concurrently.
                stage = metrics.begin_stage("transfer", stage=stage_no)
                emit_group(src, assignment.groups[dst], stage, (stage_no, src, dst))
            for src, dst in pairs:
                merge_into(src, dst, (stage_no, src, dst))

        # Final stage: the last group shares its own models toward the first
        # n_final surviving users (group-major order), who aggregate and
        # upload masked totals.
        last = n_groups - 1
        if not survivors_in[last]:
            raise GroupAbort(last, "insufficient_evaluations")
        finalists = [u for gi in range(n_groups) for u in survivors_in[gi]]
        n_final = min(config.n_final, len(finalists))
        finalists = finalists[:n_final]
        slot_of = {uid: j for j, uid in enumerate(finalists)}

        stage = metrics.begin_stage("final", stage=len(schedule))
        emit_group(last, finalists, stage, ("final", last))
        raw = transport.deliver(("final", last))
        try:
            uploads = final_stage_aggregate(
                [(slot_of[recv], msg) for _, recv, msg in raw],
                len(assignment.groups[last]),
                pts,
                member_of[last],
                n_final,
                metrics,
            )
        except InsufficientEvaluations as exc:
            raise GroupAbort(last, "insufficient_evaluations") from exc

        up_stage = metrics.begin_stage("upload", stage=len(schedule) + 1)
        finals = []
        for j, (plain, coded) in enumerate(uploads):
            n = (1 + k) * config.dim
            transport.send(("upload",), finalists[j], -1, (plain, coded), n, stage=up_stage)
            up_stage.note_sender(n)
            finals.append((j, plain, coded))

        if config.mode is Mode.GENERALIZED:
            mask_total = run_generalized_mask_pipeline(
                config,
                {uid: st.mask for uid, st in users.items()},
                dropouts,
                metrics,
            )
        else:
            # Server issued every mask and watched who emitted.
            mask_total = vec_sum(
                [users[u].mask for u in sorted(all_survivors)], dim=config.dim
            )
        aggregate = server_finalize(finals, n_final, mask_total, pts, metrics)
        if plaintext_check:
            direct = vec_sum(
                [users[u].model for u in sorted(all_survivors)], dim=config.dim
            )
            assert np.array_equal(aggregate, direct), "aggregate oracle mismatch"
    except GroupAbort as err:
        metrics.simulated_time_ms = simulated_total_time(metrics, net_params or NetParams())
        return RoundResult(
            aggregate=None,
            survivors=all_survivors,
            metrics=metrics,
            abort=Abort(group=err.group, reason=err.reason),
        )
    except InsufficientShares as err:
        metrics.simulated_time_ms = simulated_total_time(metrics, net_params or NetParams())
        return RoundResult(
            aggregate=None,
            survivors=all_survivors,
            metrics=metrics,
            abort=Abort(group=getattr(err, "group", -1), reason="insufficient_shares"),
        )

    metrics.simulated_time_ms = simulated_total_time(metrics, net_params or NetParams())
    return RoundResult(aggregate=aggregate, survivors=all_survivors, metrics=metrics)


def run_generalized_mask_pipeline(
    config: ProtocolConfig,
    user_masks: Mapping[int, np.ndarray],
    dropouts: set[int],
    metrics: RoundMetrics | None = None,
) -> np.ndarray:
    """Recover the sum of surviving users' self-generated masks.

    A second, independent partition is drawn; each surviving user
    Shamir-shares its mask to the next group (circularly, threshold half the
    receiving group), each surviving recipient forwards the sum of the
    shares it received, and the server reconstructs one mask subtotal per
    source group.  The same global dropout set applies as in the model
    pipeline.  Traffic is booked on stages 0 and 1: the sharing runs
    concurrently with the model pipeline's first stages.

    Raises InsufficientShares (with a `.group` attribute naming the receiving
    group) when more than half of a group's share-carriers are dropped.
    """
    metrics = metrics if metrics is not None else RoundMetrics()
    second_seed = derive_seed(config.seeds.partition, _TAG_SECOND_PARTITION)
    assignment = partition(config.n_users, config.group_size, second_seed)
    n_groups = assignment.n_groups
    share_stage = metrics.begin_stage("mask_share", stage=0)
    upload_stage = metrics.begin_stage("mask_upload", stage=1)

    total = zeros(config.dim)
    for gi in range(n_groups):
        recv_group = (gi + 1) % n_groups
        receivers = assignment.groups[recv_group]
        n_recv = len(receivers)
        threshold = (n_recv + 1) // 2
        senders = [u for u in assignment.groups[gi] if u not in dropouts]
        sums = [zeros(config.dim) for _ in range(n_recv)]
        for uid in senders:
            seed = derive_seed(config.seeds.masks, _TAG_MASK_SHAMIR, uid)
            shares = shamir_share(user_masks[uid], threshold, n_recv, seed)
            metrics.prg_streams += 1
            metrics.encode_ops += n_recv * threshold
            for j, share in enumerate(shares):
                metrics.account_message(config.dim, stage=share_stage)
                sums[j] = vec_add(sums[j], share.value)
            share_stage.note_sender(n_recv * config.dim)
        carried = [
            ShamirShare(index=j + 1, value=sums[j])
            for j in range(n_recv)
            if receivers[j] not in dropouts
        ]
        for _ in carried:
            metrics.account_message(config.dim, stage=upload_stage)
        upload_stage.note_sender(config.dim)
        if len(carried) < threshold:
            err = InsufficientShares(
                f"group {recv_group}: {len(carried)} mask-share carriers, "
                f"threshold {threshold}"
            )
            err.group = recv_group
            raise err
        total = vec_add(total, shamir_reconstruct(carried, threshold))
        metrics.note_decode(len(carried), 1)
    return total
