"""Batch interface: run sweeps, self-verify, evaluate bounds, print schedules.

Invoked as ``python -m circagg <subcommand>``.  Config files are plain JSON;
every seed is explicit, so identical invocations produce byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import analysis, net, pairwise
from .engine import Mode, ProtocolConfig, Seeds, build_tree_schedule, run_round
from .field import Q, derive_seed, prg, vec_sum
from .grouping import partition
from .net import NetParams, inject_dropouts, metrics_row, write_csv, write_jsonl


class ConfigError(ValueError):
    """Bad run-spec file; message carries the offending field."""


_MODES = [m.value for m in Mode]


@dataclass
class RunSpec:
    """Sweep description: one protocol/net config plus grid axes."""

    n_users: list[int]
    dropout_rate: list[float]
    mode: list[str]
    redundancy: list[int]
    dim: int = 32
    group_size: int | None = None  # None: ceil(ln N) per grid point
    n_final: int | None = None
    collusion_frac: list[float] = dc_field(default_factory=lambda: [0.0])
    trials: int = 1
    seed: int = 0
    dropout_model: str = "fixed"
    strict: bool = False
    out: str | None = None
    net_params: NetParams = dc_field(default_factory=NetParams)

    @classmethod
    def from_file(cls, path: str) -> "RunSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config is not valid JSON (line {exc.lineno}, col {exc.colno}): "
                f"{exc.msg}"
            ) from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunSpec":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")

        def axis(name, kind, default=None):
            if name not in raw:
                if default is None:
                    raise ConfigError(f"{name}: required axis missing")
                return default
            val = raw[name]
            if not isinstance(val, list) or not val:
                raise ConfigError(f"{name}: must be a nonempty list")
            for v in val:
                if not isinstance(v, kind) or isinstance(v, bool):
                    raise ConfigError(f"{name}: bad entry {v!r}")
            return val

        n_users = axis("n_users", int)
        dropout_rate = axis("dropout_rate", (int, float))
        mode = axis("mode", str, default=["sequential"])
        for m in mode:
            if m not in _MODES:
                raise ConfigError(f"mode: unknown mode {m!r} (choose from {_MODES})")
        redundancy = axis("redundancy", int, default=[1])
        collusion = axis("collusion_frac", (int, float), default=[0.0])

        def scalar(name, kind, default):
            val = raw.get(name, default)
            if val is None:
                return None
            if not isinstance(val, kind) or isinstance(val, bool):
                raise ConfigError(f"{name}: expected {kind}, got {val!r}")
            return val

        if "field_size" in raw and raw["field_size"] != Q:
            raise ConfigError(
                f"field_size: the field size is fixed at {Q}; got {raw['field_size']}"
            )
        dropout_model = scalar("dropout_model", str, "fixed")
        if dropout_model not in ("fixed", "bernoulli"):
            raise ConfigError(f"dropout_model: {dropout_model!r} not fixed|bernoulli")

        net_raw = raw.get("net", {})
        if not isinstance(net_raw, dict):
            raise ConfigError("net: must be an object")
        try:
            net_params = NetParams(**net_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"net: {exc}") from exc

        return cls(
            n_users=n_users,
            dropout_rate=[float(p) for p in dropout_rate],
            mode=mode,
            redundancy=redundancy,
            dim=scalar("dim", int, 32),
            group_size=scalar("group_size", int, None),
            n_final=scalar("n_final", int, None),
            collusion_frac=[float(f) for f in collusion],
            trials=scalar("trials", int, 1),
            seed=scalar("seed", int, 0),
            dropout_model=dropout_model,
            strict=bool(raw.get("strict", False)),
            out=scalar("out", str, None),
            net_params=net_params,
        )

    def group_size_for(self, n_users: int) -> int:
        if self.group_size is not None:
            return self.group_size
        return max(2, math.ceil(math.log(n_users)))


def _run_grid(spec: RunSpec):
    """Yield (config, models, dropouts, point) per grid point and trial."""
    point = 0
    for n in spec.n_users:
        for p in spec.dropout_rate:
            for mode in spec.mode:
                for k in spec.redundancy:
                    for trial in range(spec.trials):
                        point += 1
                        master = derive_seed(spec.seed, 1000, point)
                        seeds = Seeds.from_master(master)
                        config = ProtocolConfig(
                            n_users=n,
                            group_size=spec.group_size_for(n),
                            dim=spec.dim,
                            dropout_rate=p,
                            redundancy=k,
                            mode=Mode(mode),
                            seeds=seeds,
                            n_final=spec.n_final,
                        )
                        models = [
                            prg(derive_seed(master, 2000, uid), spec.dim)
                            for uid in range(n)
                        ]
                        assignment = partition(n, config.group_size, seeds.partition)
                        dropouts = inject_dropouts(
                            assignment, p, seeds.dropout, model=spec.dropout_model
                        )
                        yield config, models, dropouts, (n, p, mode, k, trial)


def cmd_run(args) -> int:
    try:
        spec = RunSpec.from_file(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        spec.seed = args.seed
    if args.mode is not None:
        spec.mode = [args.mode]
    if args.out is not None:
        spec.out = args.out
    if args.strict:
        spec.strict = True

    rows = []
    aborted = 0
    for config, models, dropouts, (n, p, mode, k, _) in _run_grid(spec):
        result = run_round(config, models, dropouts, net_params=spec.net_params)
        status = "ok" if result.ok else f"aborted:{result.abort.group}"
        aborted += 0 if result.ok else 1
        rows.append(
            metrics_row(mode, n, config.group_size, p, k, result.metrics, status)
        )
    if spec.out:
        write_csv(spec.out, rows)
    else:
        print(",".join(net.CSV_COLUMNS))
        for row in rows:
            print(",".join(str(row[c]) for c in net.CSV_COLUMNS))
    print(f"run: {len(rows)} rounds, {aborted} aborted"
          + (f", csv -> {spec.out}" if spec.out else ""))
    if spec.strict and aborted:
        return 1
    return 0


def _verify_records(seed: int) -> tuple[list[str], int, int]:
    """Deterministic oracle-equivalence battery at reduced dimension."""
    records = []
    passed = failed = 0

    def check(label: str, ok: bool):
        nonlocal passed, failed
        records.append(f"{'PASS' if ok else 'FAIL'} {label}")
        passed += ok
        failed += not ok

    dim = 8
    case = 0
    for n, n_g in ((9, 3), (16, 4), (24, 3)):
        for p in (0.0, 0.3):
            for mode in _MODES:
                for k in (1, 2):
                    for trial in range(2):
                        case += 1
                        master = derive_seed(seed, 3000, case)
                        seeds = Seeds.from_master(master)
                        config = ProtocolConfig(
                            n_users=n,
                            group_size=n_g,
                            dim=dim,
                            dropout_rate=p,
                            redundancy=k,
                            mode=Mode(mode),
                            seeds=seeds,
                        )
                        models = [
                            prg(derive_seed(master, 2000, uid), dim)
                            for uid in range(n)
                        ]
                        assignment = partition(n, n_g, seeds.partition)
                        dropouts = inject_dropouts(assignment, p, seeds.dropout)
                        result = run_round(config, models, dropouts)
                        label = f"engine n={n} p={p} mode={mode} k={k} t={trial}"
                        if result.ok:
                            oracle = vec_sum(
                                [models[u] for u in sorted(result.survivors)],
                                dim=dim,
                            )
                            check(label, bool(np.array_equal(result.aggregate, oracle)))
                        else:
                            check(label + " [aborted]", False)

    for n in (4, 6, 9):
        t = n // 2 + 1
        state = pairwise.setup(n, t, derive_seed(seed, 4000, n))
        models = [prg(derive_seed(seed, 5000, n, u), dim) for u in range(n)]
        for n_drop in (0, 1, n - t):
            dropped = set(range(n_drop))
            ys = {u: pairwise.mask_model(u, models[u], state) for u in range(n)}
            survivors = {u: ys[u] for u in range(n) if u not in dropped}
            got = pairwise.unmask_aggregate(survivors, dropped, state, t)
            oracle = vec_sum([models[u] for u in sorted(survivors)], dim=dim)
            check(
                f"pairwise n={n} dropped={n_drop}",
                bool(np.array_equal(got, oracle)),
            )
    return records, passed, failed


def cmd_verify(args) -> int:
    records, passed, failed = _verify_records(args.seed if args.seed is not None else 0)
    summary = f"verify: {passed} passed, {failed} failed"
    records.append(summary)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(records) + "\n")
    for line in records:
        print(line)
    return 1 if failed else 0


def cmd_bounds(args) -> int:
    try:
        spec = RunSpec.from_file(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        spec.seed = args.seed
    if args.out is not None:
        spec.out = args.out
    recs = []
    for n in spec.n_users:
        for p in spec.dropout_rate:
            for frac in spec.collusion_frac:
                report = analysis.bounds_report(
                    n_users=n,
                    group_size=spec.group_size_for(n),
                    p=p,
                    colluders=int(frac * n),
                    trials=max(spec.trials, 1000),
                    seed=spec.seed,
                )
                recs.append(report.as_record())
    if spec.out:
        write_jsonl(spec.out, recs)
    for rec in recs:
        print(json.dumps(rec, sort_keys=True))
    return 0


def cmd_schedule(args) -> int:
    if args.groups < 2:
        print("schedule: need at least 2 groups", file=sys.stderr)
        return 2
    for i, rnd in enumerate(build_tree_schedule(args.groups), start=1):
        pairs = " ".join(f"{src}->{dst}" for src, dst in rnd)
        print(f"stage {i}: {pairs}")
    print(f"stage {math.ceil(math.log2(args.groups)) + 1}: "
          f"{args.groups}->final")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circagg",
        description="Deterministic secure-aggregation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a sweep from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--mode", choices=_MODES, default=None)
    p_run.add_argument("--strict", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run the oracle-equivalence battery")
    p_verify.add_argument("--out", default=None)
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.set_defaults(func=cmd_verify)

    p_bounds = sub.add_parser("bounds", help="evaluate theoretical bounds")
    p_bounds.add_argument("--config", required=True)
    p_bounds.add_argument("--out", default=None)
    p_bounds.add_argument("--seed", type=int, default=None)
    p_bounds.set_defaults(func=cmd_bounds)

    p_sched = sub.add_parser("schedule", help="print the tree merge schedule")
    p_sched.add_argument("groups", type=int)
    p_sched.set_defaults(func=cmd_schedule)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
