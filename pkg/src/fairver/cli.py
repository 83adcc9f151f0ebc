"""Command-line interface.

``fairver verify`` runs the full pipeline and writes a replayable report
(JSON + CSV + charts); ``fairver replay`` re-verifies one recorded region;
``fairver export-pruned`` materializes the pruned network behind one
region's verdict; ``fairver oracle`` brute-forces a small region exactly.

Exit codes for ``verify``: 0 certified (unsat), 1 violation found (sat),
2 undecided, 3 usage or runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import FairverError
from .model_io import load_portable, save_portable
from .oracle import brute_force
from .partitioner import Status, partition
from .pruning import pruned_to_network, pruning_sidecar
from .query import build_predicate, load_query
from .report import summary_table, write_report
from .runner import RunOptions, pruned_for_partition, replay, run

_EXIT_BY_STATUS = {Status.UNSAT: 0, Status.SAT: 1, Status.UNKNOWN: 2, Status.ERROR: 3}


def _add_verify(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("verify", help="verify a model against a fairness query")
    p.add_argument("--model", required=True, help="portable model file")
    p.add_argument("--query", required=True, help="query file (JSON)")
    p.add_argument("--solver", default=None, help="solver command reading SMT-LIB2 on stdin")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")
    p.add_argument("--soft-timeout", type=float, default=None, metavar="S",
                   help="per-solver-call limit in seconds (default: query file, else 100)")
    p.add_argument("--hard-timeout", type=float, default=None, metavar="S",
                   help="whole-run limit in seconds (default: query file, else 1800)")
    p.add_argument("--ms", type=int, default=None, metavar="K",
                   help="maximum attribute size per region (default: query file, else 100)")
    p.add_argument("--seed", type=int, default=0, help="shuffle/profile seed (default 0)")
    p.add_argument("--stop-on-sat", action="store_true",
                   help="stop after the first violation")
    p.add_argument("--no-heuristic", action="store_true",
                   help="disable the heuristic pruning stage")
    p.add_argument("--tolerance", type=float, default=5.0, metavar="PCT",
                   help="heuristic percentile tolerance (default 5)")
    p.add_argument("--profile-size", type=int, default=1000, metavar="S",
                   help="simulation count for profiling (default 1000)")
    p.add_argument("--partition-id", type=int, default=None, metavar="I",
                   help="verify only this region")
    p.add_argument("--dump-smt", default=None, metavar="DIR",
                   help="persist every generated script under DIR")
    p.add_argument("--dump-bounds", action="store_true",
                   help="include per-layer bound tables in the report")
    p.add_argument("--out", default=None, metavar="REPORT",
                   help="report path (default: <model stem>.report.json)")
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering charts next to the report")
    p.add_argument("-v", "--verbose", action="store_true")


def _cmd_verify(args) -> int:
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    net, schema = load_portable(args.model)
    query = load_query(args.query, schema)
    options = RunOptions(
        solver=args.solver,
        jobs=args.jobs,
        seed=args.seed,
        soft_timeout_s=args.soft_timeout,
        hard_timeout_s=args.hard_timeout,
        max_attribute_size=args.ms,
        stop_on_sat=args.stop_on_sat,
        heuristic=not args.no_heuristic,
        tolerance_pct=args.tolerance,
        profile_size=args.profile_size,
        dump_smt_dir=args.dump_smt,
        dump_bounds=args.dump_bounds,
        only_partition=args.partition_id,
    )
    report = run(args.model, query, options, net=net, schema=schema)
    out = args.out or (Path(args.model).stem + ".report.json")
    written = write_report(report, out, figures=not args.no_figures)
    print(summary_table(report))
    print("report: " + ", ".join(str(p) for p in written))
    return _EXIT_BY_STATUS[report.verdict]


def _add_replay(sub) -> None:
    p = sub.add_parser("replay", help="re-verify one region from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--partition-id", type=int, required=True)
    p.add_argument("--solver", default=None,
                   help="override the recorded solver command")


def _cmd_replay(args) -> int:
    outcome = replay(args.report, args.partition_id, solver=args.solver)
    print(f"stored status: {outcome.stored.status.value}")
    print(f"fresh status:  {outcome.fresh.status.value}")
    if outcome.stored_counterexample_valid is not None:
        print(
            "stored counterexample replays as violating: "
            f"{outcome.stored_counterexample_valid}"
        )
    if not outcome.status_match:
        print("MISMATCH: statuses differ (solver nondeterminism or changed inputs)")
        return 2
    print("match")
    return 0


def _add_export_pruned(sub) -> None:
    p = sub.add_parser(
        "export-pruned",
        help="write the pruned network behind one region's verdict",
    )
    p.add_argument("--report", required=True)
    p.add_argument("--partition-id", type=int, required=True)
    p.add_argument("--out", required=True, help="portable model output path")
    p.add_argument("--solver", default=None)


def _cmd_export_pruned(args) -> int:
    pruned, schema, stored = pruned_for_partition(
        args.report, args.partition_id, solver=args.solver
    )
    compact = pruned_to_network(pruned)
    save_portable(compact, schema, args.out)
    sidecar = Path(args.out).with_suffix(".pruning.json")
    sidecar.write_text(
        json.dumps(pruning_sidecar(pruned, box=stored.box), indent=2) + "\n"
    )
    print(f"pruned model: {args.out}")
    print(f"sidecar:      {sidecar}")
    print(
        f"region status {stored.status.value}; behaviour-preserving: "
        f"{not pruned.has_heuristic_removals}"
    )
    return 0


def _add_oracle(sub) -> None:
    p = sub.add_parser(
        "oracle", help="brute-force one region exactly (small integer grids)"
    )
    p.add_argument("--model", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--partition-id", type=int, default=None,
                   help="region to check (default: whole domain)")
    p.add_argument("--ms", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pair-cap", type=int, default=10_000_000)


def _cmd_oracle(args) -> int:
    net, schema = load_portable(args.model)
    query = load_query(args.query, schema)
    if args.ms is not None:
        from dataclasses import replace

        query = replace(query, max_attribute_size=args.ms)
    pred = build_predicate(query, schema, net)
    if args.partition_id is not None:
        pset = partition(pred.domain_box, query, schema, shuffle_seed=args.seed)
        box = pset.box(args.partition_id)
    else:
        box = pred.domain_box
    result = brute_force(net, pred, box, pair_cap=args.pair_cap)
    print(f"status: {result.status.value} ({result.pairs_checked} pairs checked)")
    if result.witness is not None:
        print(f"x : {result.witness[0].tolist()}")
        print(f"x': {result.witness[1].tolist()}")
    return _EXIT_BY_STATUS[result.status]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fairver",
        description="individual-fairness verification of ReLU networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_verify(sub)
    _add_replay(sub)
    _add_export_pruned(sub)
    _add_oracle(sub)
    args = parser.parse_args(argv)
    handlers = {
        "verify": _cmd_verify,
        "replay": _cmd_replay,
        "export-pruned": _cmd_export_pruned,
        "oracle": _cmd_oracle,
    }
    try:
        return handlers[args.command](args)
    except (FairverError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
