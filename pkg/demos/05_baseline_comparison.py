"""Grouped aggregation versus the all-pairs masking baseline.

Two quantities tell the story:
  * traffic volume of the grouped protocol grows near-linearly in N
    (log-sized groups), while the baseline's pairwise seed population is
    quadratic;
  * the baseline server's recovery work grows with the dropout count
    ((N-D) + D(N-D) PRG streams), while the grouped protocol's decode cost
    stays small and local.
"""

import math

import numpy as np

from circagg import ProtocolConfig, Seeds, pairwise_setup, prg, run_round, vec_sum
from circagg.field import derive_seed
from circagg.net import RoundMetrics
from circagg.pairwise import mask_model, unmask_aggregate

print(f"{'N':>5} {'grouped volume':>15} {'ratio':>7} {'pair seeds':>11} {'ratio':>7}")
prev_vol = prev_seeds = None
for n in (64, 128, 256, 512):
    group = max(2, math.ceil(math.log(n)))
    cfg = ProtocolConfig(n_users=n, group_size=group, dim=4, seeds=Seeds.from_master(n))
    res = run_round(cfg, [prg(derive_seed(n, u), 4) for u in range(n)], set())
    vol = res.metrics.field_elems_sent
    seeds = n * (n - 1) // 2
    vr = f"{vol / prev_vol:.2f}" if prev_vol else "-"
    sr = f"{seeds / prev_seeds:.2f}" if prev_seeds else "-"
    print(f"{n:>5} {vol:>15} {vr:>7} {seeds:>11} {sr:>7}")
    prev_vol, prev_seeds = vol, seeds

print("\nbaseline recovery cost as users drop (N = 16, threshold 9):")
n, dim = 16, 4
state = pairwise_setup(n, n // 2 + 1, seed=5)
models = [prg(derive_seed(8, u), dim) for u in range(n)]
ys = {u: mask_model(u, models[u], state) for u in range(n)}
print(f"{'dropped':>8} {'PRG streams':>12} {'exact':>6}")
for n_drop in (0, 2, 4, 7):
    dropped = set(range(n_drop))
    metrics = RoundMetrics()
    got = unmask_aggregate(
        {u: ys[u] for u in range(n) if u not in dropped},
        dropped, state, n // 2 + 1, metrics,
    )
    oracle = vec_sum([models[u] for u in range(n) if u not in dropped], dim=dim)
    print(f"{n_drop:>8} {metrics.prg_streams:>12} {str(np.array_equal(got, oracle)):>6}")
