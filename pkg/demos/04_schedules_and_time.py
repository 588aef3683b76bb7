"""Sequential chain versus tree-parallel merges.

Both schedules move the same number of bytes; the tree just overlaps
transfers, cutting the critical path from L-1 stages to ceil(log2 L).  The
declared time model makes that visible.
"""

import numpy as np

from circagg import ProtocolConfig, Seeds, build_tree_schedule, prg, run_round
from circagg.field import derive_seed
from circagg.net import NetParams, simulated_total_time

print("tree schedule for 8 groups:")
for i, rnd in enumerate(build_tree_schedule(8), start=1):
    print(f"  round {i}: {rnd}")

N, NG, DIM = 24, 3, 64  # eight groups of three
models = [prg(derive_seed(3, uid), DIM) for uid in range(N)]

results = {}
for mode in ("sequential", "tree"):
    cfg = ProtocolConfig(
        n_users=N, group_size=NG, dim=DIM, mode=mode, seeds=Seeds.from_master(99)
    )
    results[mode] = run_round(cfg, models, set())

seq, tree = results["sequential"], results["tree"]
assert np.array_equal(seq.aggregate, tree.aggregate)
print("\nboth modes agree on the aggregate.")

count_stages = lambda r: len(
    {s.stage for s in r.metrics.stages if s.label == "transfer"}
)
print("transfer stages : sequential =", count_stages(seq), " tree =", count_stages(tree))
print("volume (elems)  : sequential =", seq.metrics.field_elems_sent,
      " tree =", tree.metrics.field_elems_sent)

print("\nsimulated time (ms) under different bandwidths:")
print(f"{'bandwidth':>12} {'sequential':>12} {'tree':>10}")
for bw in (1e8, 3e8, 1e9):
    ts = simulated_total_time(seq.metrics, NetParams(bandwidth_bps=bw))
    tt = simulated_total_time(tree.metrics, NetParams(bandwidth_bps=bw))
    print(f"{bw / 1e6:>9.0f}Mbp {ts:>12.3f} {tt:>10.3f}")

print("\nserializing concurrent pair transfers (no within-stage parallelism):")
par = simulated_total_time(tree.metrics, NetParams(parallel_stages=True))
ser = simulated_total_time(tree.metrics, NetParams(parallel_stages=False))
print(f"  parallel={par:.3f} ms   serialized={ser:.3f} ms")
