"""circagg: deterministic simulator for circular-group secure aggregation.

Users are partitioned into groups that pass masked, erasure-coded running
sums around a ring (sequentially or along a merge tree) so the server learns
only the total of the surviving users' vectors.  An all-pairs masking
baseline, dropout injection, overhead accounting, and the matching
theoretical bounds round out the toolkit.
"""

from .analysis import (
    BoundsReport,
    bounds_report,
    failure_bound,
    monte_carlo_failure,
    monte_carlo_log_survival,
    privacy_bound,
    robustness_converse_bound,
)
from .engine import (
    Abort,
    Mode,
    ProtocolConfig,
    RoundResult,
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
from .field import Q, PrgStream, derive_seed, prg, vec, vec_add, vec_sub, vec_sum, zeros
from .grouping import GroupAssignment, group_size, kl_bernoulli, partition
from .lagrange import (
    DuplicatePoints,
    EvalPoints,
    InsufficientEvaluations,
    encode_shares,
    interpolate_eval,
    recover_missing,
)
from .net import (
    NetParams,
    RoundMetrics,
    StageRecord,
    inject_dropouts,
    simulated_total_time,
)
from .pairwise import PairwiseState, mask_model, setup as pairwise_setup, unmask_aggregate
from .sharing import (
    BadThreshold,
    InsufficientShares,
    ShamirShare,
    make_additive_shares,
    shamir_reconstruct,
    shamir_share,
)

__version__ = "0.1.0"
