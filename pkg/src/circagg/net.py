"""Simulated transport: dropout injection, counting, and a declared time model.

Nothing here moves real bytes.  Messages pass through an in-process queue
with a deterministic delivery order, counters track field elements / PRG
streams / polynomial operations, and simulated time comes from a small
parametric cost model (bytes over a bandwidth plus per-stage latency, plus a
per-operation compute constant).  Wall-clock behaviour of any real
deployment is out of scope; only the counted quantities are meaningful.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

import numpy as np

from .field import PrgStream, Q
from .grouping import GroupAssignment

BYTES_PER_ELEM = 4  # 32-bit field entries on the wire


@dataclass
class NetParams:
    bandwidth_bps: float = 1e9
    per_message_latency_ms: float = 1.0
    parallel_stages: bool = True  # concurrent transfers within a stage
    per_op_time_ms: float = 1e-4  # cost of one polynomial-evaluation term

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth_bps must be positive")


@dataclass
class StageRecord:
    """Traffic of one transfer on the schedule's critical path."""

    stage: int
    label: str
    field_elems: int = 0
    messages: int = 0
    max_sender_field_elems: int = 0

    def note_sender(self, total_elems: int) -> None:
        if total_elems > self.max_sender_field_elems:
            self.max_sender_field_elems = total_elems


@dataclass
class RoundMetrics:
    field_elems_sent: int = 0
    messages_sent: int = 0
    prg_streams: int = 0
    encode_ops: int = 0
    decode_ops: int = 0
    simulated_time_ms: float = 0.0
    stages: list[StageRecord] = dc_field(default_factory=list)
    decode_events: list[tuple[int, int]] = dc_field(default_factory=list)

    def begin_stage(self, label: str, stage: int | None = None) -> StageRecord:
        rec = StageRecord(
            stage=stage if stage is not None else len(self.stages), label=label
        )
        self.stages.append(rec)
        return rec

    def account_message(
        self, n_field_elems: int, stage: StageRecord | None = None
    ) -> None:
        self.messages_sent += 1
        self.field_elems_sent += n_field_elems
        if stage is not None:
            stage.messages += 1
            stage.field_elems += n_field_elems

    def note_decode(self, n_known: int, n_targets: int) -> None:
        self.decode_ops += n_known * n_targets
        self.decode_events.append((n_known, n_targets))


class Transport:
    """Deterministic in-process queue with accounting and optional tracing."""

    def __init__(self, metrics: RoundMetrics, trace: list | None = None):
        self.metrics = metrics
        self.trace = trace
        self._queues: dict[tuple, list] = {}

    def send(
        self,
        key: tuple,
        sender: int,
        receiver: int,
        payload,
        n_field_elems: int,
        stage: StageRecord | None = None,
    ) -> None:
        self.metrics.account_message(n_field_elems, stage=stage)
        self._queues.setdefault(key, []).append((sender, receiver, payload))
        if self.trace is not None:
            self.trace.append(
                {
                    "stage": key[0] if key else None,
                    "label": stage.label if stage else None,
                    "sender": sender,
                    "receiver": receiver,
                    "digest": payload_digest(payload),
                }
            )

    def deliver(self, key: tuple) -> list:
        """Messages for `key`, sorted by (sender, receiver)."""
        return sorted(self._queues.pop(key, []), key=lambda m: (m[0], m[1]))


def payload_digest(payload) -> str:
    """Short stable digest of the field vectors inside a message payload."""
    h = hashlib.sha256()
    for arr in _payload_arrays(payload):
        h.update(arr.astype("<u8").tobytes())
    return h.hexdigest()[:16]


def _payload_arrays(payload):
    if isinstance(payload, np.ndarray):
        yield payload
        return
    if isinstance(payload, (list, tuple)):
        for p in payload:
            yield from _payload_arrays(p)
        return
    # Dataclass payloads: walk public vector-ish attributes in order.
    for name in getattr(payload, "__dataclass_fields__", {}):
        val = getattr(payload, name)
        if isinstance(val, np.ndarray):
            yield val
        elif isinstance(val, (list, tuple)):
            yield from _payload_arrays(val)


def inject_dropouts(
    assignment: GroupAssignment, p: float, seed: int, model: str = "fixed"
) -> set[int]:
    """Choose the users that will fail to propagate this round.

    model="fixed": exactly floor(p * N_l) per group, uniformly without
    replacement (the worst-case per-group pattern).  model="bernoulli": each
    user drops independently with probability p.  Deterministic in `seed`.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must be in [0, 1), got {p}")
    stream = PrgStream(seed)
    dropped: set[int] = set()
    if model == "fixed":
        for members in assignment.groups:
            count = math.floor(p * len(members) + 1e-9)
            pool = list(members)
            for i in range(count):
                j = i + stream.next_below(len(pool) - i)
                pool[i], pool[j] = pool[j], pool[i]
                dropped.add(pool[i])
    elif model == "bernoulli":
        threshold = int(round(p * Q))
        for members in assignment.groups:
            for u in members:
                if stream.next_element() < threshold:
                    dropped.add(u)
    else:
        raise ValueError(f"unknown dropout model {model!r}")
    return dropped


def simulated_total_time(metrics: RoundMetrics, params: NetParams) -> float:
    """Critical-path time (ms) under the declared cost model.

    Per stage index: each record costs max-sender-bytes / bandwidth plus the
    per-message latency; concurrent records at one index take the max when
    parallel_stages is set, otherwise they serialize.  Compute time is the
    polynomial op count times a constant.
    """
    by_stage: dict[int, list[StageRecord]] = {}
    for rec in metrics.stages:
        if rec.messages == 0:
            continue
        by_stage.setdefault(rec.stage, []).append(rec)
    total = 0.0
    for stage in sorted(by_stage):
        times = [
            rec.max_sender_field_elems * BYTES_PER_ELEM * 8.0
            / params.bandwidth_bps * 1000.0
            + params.per_message_latency_ms
            for rec in by_stage[stage]
        ]
        total += max(times) if params.parallel_stages else sum(times)
    total += (metrics.encode_ops + metrics.decode_ops) * params.per_op_time_ms
    return total


# ---------------------------------------------------------------------------
# Metrics export
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "mode",
    "N",
    "N_g",
    "p",
    "k",
    "field_elems_sent",
    "prg_streams",
    "decode_ops",
    "simulated_time_ms",
    "status",
)


def metrics_row(
    mode: str,
    n_users: int,
    group_size: int,
    p: float,
    k: int,
    metrics: RoundMetrics,
    status: str,
) -> dict:
    return {
        "mode": mode,
        "N": n_users,
        "N_g": group_size,
        "p": p,
        "k": k,
        "field_elems_sent": metrics.field_elems_sent,
        "prg_streams": metrics.prg_streams,
        "decode_ops": metrics.decode_ops,
        "simulated_time_ms": metrics.simulated_time_ms,
        "status": status,
    }


def write_csv(path: str, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row[c]) for c in CSV_COLUMNS) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_jsonl(path: str, records: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
