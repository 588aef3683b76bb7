"""One aggregation round, narrated: nine users, three groups, one dropout.

Users are split into three groups of three, the third member of the middle
group dies mid-round, and the total still matches the plain sum over the
eight users who finished -- the receivers rebuild the lost running
aggregate from the four evaluations the two survivors carried.
"""

import numpy as np

from circagg import ProtocolConfig, Seeds, prg, run_round, vec_sum
from circagg.field import derive_seed
from circagg.grouping import partition
from circagg.net import write_jsonl

DIM = 8
cfg = ProtocolConfig(n_users=9, group_size=3, dim=DIM, seeds=Seeds.from_master(2024))
models = [prg(derive_seed(1, uid), DIM) for uid in range(9)]

assignment = partition(9, 3, cfg.seeds.partition)
print("groups:", assignment.groups)
victim = assignment.groups[1][2]
print(f"user {victim} (third member of the middle group) will drop\n")

trace = []
result = run_round(cfg, models, {victim}, trace=trace)

print("status          :", "ok" if result.ok else result.abort)
expected = vec_sum([models[u] for u in range(9) if u != victim])
print("aggregate exact :", np.array_equal(result.aggregate, expected))
print("survivors       :", sorted(result.survivors))

m = result.metrics
print("\nfield elements sent:", m.field_elems_sent)
print("messages sent      :", m.messages_sent)
print("decode events      :", m.decode_events,
      "<- one recovery from the four surviving evaluations")
print("simulated time (ms):", round(m.simulated_time_ms, 3))

# The full transcript (stage, sender, receiver, payload digest) can be kept
# for regression diffing.
write_jsonl("/tmp/round_trace.jsonl", trace)
print(f"\nwrote {len(trace)} transcript records to /tmp/round_trace.jsonl")
print("first record:", trace[0])
