"""Command-line front end.

Subcommands:
  run <scenario>   drive a canned scenario and emit its JSON report
  footprint        print the virtual-size cost table (CSV)
  bench-commit     time commitment assembly across batch sizes and fit a
                   linear model

Exit codes: 0 success / all verdicts pass, 1 a verdict failed,
2 bad usage or invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import List, Optional

from . import footprint, harness
from .ledger import Params


def _load_params(args) -> Params:
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides.update(json.load(fh))
    if getattr(args, "fee_rate", None) is not None:
        overrides["fee_rate"] = args.fee_rate
    p = Params(**{k: v for k, v in overrides.items()
                  if k in Params.__dataclass_fields__})
    p.validate(unsafe=args.unsafe)
    return p


def cmd_run(args) -> int:
    try:
        params = _load_params(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.scenario not in harness.SCENARIOS:
        print(f"error: unknown scenario {args.scenario!r}; choose from "
              + ", ".join(sorted(harness.SCENARIOS)), file=sys.stderr)
        return 2
    config = {"seed": args.seed, "params": params}
    if args.no_resets:
        config["resets"] = False
    if args.scenario == "ff_double_spend" or args.ff:
        config.setdefault("delta", 1)
    report = harness.run_scenario(args.scenario, **config)
    text = harness.report_json(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    ok = all(v["pass"] for v in report["verdicts"])
    return 0 if ok else 1


def cmd_footprint(args) -> int:
    fee_rate = args.fee_rate if args.fee_rate is not None else 6
    ns = [2 ** i for i in range(11)]
    text = footprint.cost_table_csv(ns, fee_rate)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench_commit(args) -> int:
    import numpy as np

    from . import arkcore, crypto
    from .arkcore import Vtxo, p2pk, vtxo_lock
    from .ledger import Chain

    try:
        params = _load_params(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sizes = args.sizes or [2, 4, 8, 16, 32, 64, 128, 256]
    op_sk, op_pk = crypto.keygen(b"bench-op")
    rows = []
    for n in sizes:
        chain = Chain(params)
        chain.register("bench")
        leaves = []
        for i in range(n):
            sk, pk = crypto.keygen(b"bench-%d" % i)
            leaves.append(Vtxo(1_000, vtxo_lock(pk, op_pk, params.t_u),
                               f"u{i}", pk))
        funding = chain.grant(1_000 * n, p2pk(op_pk))
        t0 = time.perf_counter()
        arkcore.build_vtxt(funding, leaves, op_pk,
                           chain.height + 2 * params.k + params.t_e,
                           params.arity)
        rows.append((n, time.perf_counter() - t0))
    xs = np.array([r[0] for r in rows], dtype=float)
    ys = np.array([r[1] for r in rows], dtype=float)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    report = {
        "sizes": sizes,
        "seconds": [round(r[1], 6) for r in rows],
        "fit": {"slope": slope, "intercept": intercept, "r_squared": r2},
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if r2 >= 0.9 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arksim", description="commit-chain protocol simulator")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="JSON file of parameter overrides")
        p.add_argument("--out", help="write output to this file")
        p.add_argument("--unsafe", action="store_true",
                       help="allow parameter combinations outside the safe"
                            " region (e.g. renewal window <= 4k)")
        p.add_argument("--fee-rate", type=int, default=None)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario")
    common(p_run)
    p_run.add_argument("--no-resets", action="store_true",
                       help="operator cosigns offchain spends without"
                            " holding reset transactions")
    p_run.add_argument("--ff", action="store_true",
                       help="enable the fast-finality overlay")
    p_run.set_defaults(func=cmd_run)

    p_fp = sub.add_parser("footprint", help="print the exit cost table")
    common(p_fp)
    p_fp.set_defaults(func=cmd_footprint)

    p_bench = sub.add_parser("bench-commit",
                             help="benchmark commitment assembly")
    common(p_bench)
    p_bench.add_argument("--sizes", type=int, nargs="+")
    p_bench.set_defaults(func=cmd_bench_commit)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
