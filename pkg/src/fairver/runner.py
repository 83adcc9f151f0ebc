"""End-to-end verification runs: partition, prune, solve, aggregate.

Per region the pipeline is: interval bounds, sound pruning (with per-neuron
solver checks), one solver call under the soft timeout; if that returns
unknown and the heuristic stage is enabled, prune further using the
network profile and solve once more under the soft timeout.  A hard
deadline bounds the whole run; regions not reached stay unattempted and the
overall verdict accounts for them.

Workers pull region ids from the shuffled stream; each worker owns one
solver session (re-used across its queries, reset in between), so there is
never shared mutable solver state.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__ as _pkg_version
from .bounds import bounds_table, neuron_bounds
from .errors import ReplayError, SolverBackendError
from .model_io import AttributeSchema, Network, load_portable
from .partitioner import Partition, Status, accumulate, partition
from .pruning import (
    NeuronProfile,
    PrunedNetwork,
    apply_pruning,
    compression_ratio,
    heuristic_prune,
    profile,
    sound_prune,
)
from .query import (
    FairnessPredicate,
    FairnessQuery,
    build_predicate,
    check_counterexample,
    query_from_doc,
    query_to_doc,
)
from .smt import SmtSession, decode_pair, encode

log = logging.getLogger("fairver")


@dataclass(frozen=True)
class RunOptions:
    """Knobs of a verification run; timeouts and MS default to the query's."""

    solver: str | Sequence[str] | None = None
    jobs: int = 1
    seed: int = 0
    soft_timeout_s: float | None = None
    hard_timeout_s: float | None = None
    max_attribute_size: int | None = None
    stop_on_sat: bool = False
    heuristic: bool = True
    tolerance_pct: float = 5.0
    profile_size: int = 1000
    dump_smt_dir: str | None = None
    dump_bounds: bool = False
    only_partition: int | None = None

    def effective(self, query: FairnessQuery) -> "RunOptions":
        return replace(
            self,
            soft_timeout_s=(
                self.soft_timeout_s
                if self.soft_timeout_s is not None
                else query.soft_timeout_s
            ),
            hard_timeout_s=(
                self.hard_timeout_s
                if self.hard_timeout_s is not None
                else query.hard_timeout_s
            ),
            max_attribute_size=(
                self.max_attribute_size
                if self.max_attribute_size is not None
                else query.max_attribute_size
            ),
        )


@dataclass
class PartitionResult:
    """Outcome for one region."""

    partition_id: int
    box: tuple[tuple[float, float], ...]
    status: Status
    counterexample: tuple[np.ndarray, np.ndarray] | None = None
    compression_sound: float = 0.0
    compression_heuristic: float = 0.0  # additional ratio beyond the sound stage
    t_sound_s: float = 0.0
    t_heuristic_s: float = 0.0
    t_solver_sound_s: float = 0.0  # wall time of the split-query solver call alone
    t_solver_heuristic_s: float = 0.0
    heuristic_attempted: bool = False
    heuristic_succeeded: bool = False
    decided_phase: str | None = None  # "sound" | "heuristic"
    counterexample_on_pruned_only: bool = False
    solver_note: str | None = None
    bounds_dump: list | None = None
    stream_position: int = 0

    def to_doc(self) -> dict:
        return {
            "partition_id": self.partition_id,
            "box": [[float(lo), float(hi)] for lo, hi in self.box],
            "status": self.status.value,
            "counterexample": (
                None
                if self.counterexample is None
                else [self.counterexample[0].tolist(), self.counterexample[1].tolist()]
            ),
            "compression_sound": self.compression_sound,
            "compression_heuristic": self.compression_heuristic,
            "t_sound_s": self.t_sound_s,
            "t_heuristic_s": self.t_heuristic_s,
            "t_solver_sound_s": self.t_solver_sound_s,
            "t_solver_heuristic_s": self.t_solver_heuristic_s,
            "heuristic_attempted": self.heuristic_attempted,
            "heuristic_succeeded": self.heuristic_succeeded,
            "decided_phase": self.decided_phase,
            "counterexample_on_pruned_only": self.counterexample_on_pruned_only,
            "solver_note": self.solver_note,
            "bounds_dump": self.bounds_dump,
            "stream_position": self.stream_position,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "PartitionResult":
        ce = doc.get("counterexample")
        return cls(
            partition_id=int(doc["partition_id"]),
            box=tuple((float(lo), float(hi)) for lo, hi in doc["box"]),
            status=Status(doc["status"]),
            counterexample=(
                None
                if ce is None
                else (np.asarray(ce[0], dtype=np.float64), np.asarray(ce[1], dtype=np.float64))
            ),
            compression_sound=float(doc["compression_sound"]),
            compression_heuristic=float(doc["compression_heuristic"]),
            t_sound_s=float(doc["t_sound_s"]),
            t_heuristic_s=float(doc["t_heuristic_s"]),
            t_solver_sound_s=float(doc.get("t_solver_sound_s", 0.0)),
            t_solver_heuristic_s=float(doc.get("t_solver_heuristic_s", 0.0)),
            heuristic_attempted=bool(doc["heuristic_attempted"]),
            heuristic_succeeded=bool(doc["heuristic_succeeded"]),
            decided_phase=doc.get("decided_phase"),
            counterexample_on_pruned_only=bool(doc.get("counterexample_on_pruned_only", False)),
            solver_note=doc.get("solver_note"),
            bounds_dump=doc.get("bounds_dump"),
            stream_position=int(doc.get("stream_position", 0)),
        )


@dataclass
class RunReport:
    """Everything needed to read, summarize, and replay one run."""

    model_path: str
    query_doc: dict
    options_doc: dict
    seed: int
    solver_command: list[str]
    solver_version: str | None
    partitions_total: int
    results: list[PartitionResult]
    verdict: Status
    coverage_pct: float
    counts: dict
    totals: dict
    counterexample: tuple[np.ndarray, np.ndarray] | None
    wall_time_s: float
    notes: list[str] = field(default_factory=list)
    package_version: str = _pkg_version

    def to_doc(self) -> dict:
        return {
            "package_version": self.package_version,
            "model_path": self.model_path,
            "query": self.query_doc,
            "options": self.options_doc,
            "seed": self.seed,
            "solver_command": self.solver_command,
            "solver_version": self.solver_version,
            "partitions_total": self.partitions_total,
            "verdict": self.verdict.value,
            "coverage_pct": self.coverage_pct,
            "counts": self.counts,
            "totals": self.totals,
            "counterexample": (
                None
                if self.counterexample is None
                else [self.counterexample[0].tolist(), self.counterexample[1].tolist()]
            ),
            "wall_time_s": self.wall_time_s,
            "notes": self.notes,
            "partitions": [r.to_doc() for r in self.results],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "RunReport":
        ce = doc.get("counterexample")
        return cls(
            model_path=doc["model_path"],
            query_doc=doc["query"],
            options_doc=doc["options"],
            seed=int(doc["seed"]),
            solver_command=list(doc["solver_command"]),
            solver_version=doc.get("solver_version"),
            partitions_total=int(doc["partitions_total"]),
            results=[PartitionResult.from_doc(d) for d in doc["partitions"]],
            verdict=Status(doc["verdict"]),
            coverage_pct=float(doc["coverage_pct"]),
            counts=doc["counts"],
            totals=doc["totals"],
            counterexample=(
                None
                if ce is None
                else (np.asarray(ce[0], dtype=np.float64), np.asarray(ce[1], dtype=np.float64))
            ),
            wall_time_s=float(doc["wall_time_s"]),
            notes=list(doc.get("notes", [])),
            package_version=doc.get("package_version", "unknown"),
        )


def _profile_seed(seed: int) -> int:
    return seed ^ 0x5EED


def verify_partition(
    net: Network,
    schema: AttributeSchema,
    pred: FairnessPredicate,
    part: Partition,
    session: SmtSession,
    soft_timeout_s: float,
    seed: int,
    heuristic: bool = True,
    tolerance_pct: float = 5.0,
    net_profile: NeuronProfile | None = None,
    dump_smt_dir: str | None = None,
    dump_bounds: bool = False,
) -> PartitionResult:
    """Run the full per-region pipeline and return its outcome."""
    t0 = time.monotonic()
    nb = neuron_bounds(net, part.box)
    pruned = sound_prune(net, part.box, nb, session, timeout_s=soft_timeout_s)
    script = encode(pruned, pred, part, schema, timeout_s=soft_timeout_s, seed=seed)
    if dump_smt_dir:
        _dump_script(dump_smt_dir, part.id, "sound", script.text)
    note = None
    try:
        outcome = session.check(script, soft_timeout_s)
        status = outcome.status
    except SolverBackendError as exc:
        status = Status.ERROR
        outcome = None
        note = str(exc)
    t_sound = time.monotonic() - t0

    result = PartitionResult(
        partition_id=part.id,
        box=part.box,
        status=status,
        compression_sound=compression_ratio(pruned),
        t_sound_s=t_sound,
        t_solver_sound_s=outcome.wall_time_s if outcome is not None else 0.0,
        solver_note=note,
        decided_phase="sound" if status in (Status.SAT, Status.UNSAT) else None,
        bounds_dump=bounds_table(net, nb) if dump_bounds else None,
    )

    if status is Status.SAT:
        x, xp = decode_pair(outcome.model, schema)
        if check_counterexample(pred, net, x, xp):
            result.counterexample = (x, xp)
        else:
            # A model that does not replay concretely is not evidence.
            result.status = Status.UNKNOWN
            result.decided_phase = None
            result.solver_note = "sat model failed concrete replay; reported unknown"

    if result.status is Status.UNKNOWN and heuristic and net_profile is not None:
        t1 = time.monotonic()
        result.heuristic_attempted = True
        hpruned = heuristic_prune(pruned, net_profile, tolerance_pct)
        result.compression_heuristic = compression_ratio(hpruned) - compression_ratio(pruned)
        hscript = encode(hpruned, pred, part, schema, timeout_s=soft_timeout_s, seed=seed)
        if dump_smt_dir:
            _dump_script(dump_smt_dir, part.id, "heuristic", hscript.text)
        try:
            houtcome = session.check(hscript, soft_timeout_s)
            hstatus = houtcome.status
            result.t_solver_heuristic_s = houtcome.wall_time_s
        except SolverBackendError as exc:
            hstatus = Status.ERROR
            houtcome = None
            result.solver_note = str(exc)
        if hstatus is Status.SAT:
            x, xp = decode_pair(houtcome.model, schema)
            on_pruned = check_counterexample(
                pred, net, x, xp, forward_fn=lambda v: apply_pruning(hpruned, v)
            )
            on_base = check_counterexample(pred, net, x, xp)
            if on_pruned or on_base:
                result.status = Status.SAT
                result.counterexample = (x, xp)
                result.counterexample_on_pruned_only = on_pruned and not on_base
                result.heuristic_succeeded = True
                result.decided_phase = "heuristic"
            else:
                result.solver_note = (
                    "heuristic sat model failed concrete replay; reported unknown"
                )
        elif hstatus is Status.UNSAT:
            result.status = Status.UNSAT
            result.heuristic_succeeded = True
            result.decided_phase = "heuristic"
        result.t_heuristic_s = time.monotonic() - t1
    return result


def _dump_script(dirpath: str, pid: int, phase: str, text: str) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"partition{pid:06d}_{phase}.smt2").write_text(text)


def _totals(results: list[PartitionResult]) -> dict:
    n = len(results)
    h = [r for r in results if r.heuristic_attempted]
    return {
        "attempted": n,
        "heuristic_attempted": len(h),
        "heuristic_succeeded": sum(r.heuristic_succeeded for r in results),
        "avg_compression_sound": (
            float(np.mean([r.compression_sound for r in results])) if n else 0.0
        ),
        "avg_compression_heuristic": (
            float(np.mean([r.compression_heuristic for r in h])) if h else 0.0
        ),
        "avg_t_sound_s": float(np.mean([r.t_sound_s for r in results])) if n else 0.0,
        "avg_t_heuristic_s": (
            float(np.mean([r.t_heuristic_s for r in h])) if h else 0.0
        ),
        "sum_t_sound_s": float(np.sum([r.t_sound_s for r in results])) if n else 0.0,
        "sum_t_heuristic_s": float(np.sum([r.t_heuristic_s for r in results])) if n else 0.0,
        "avg_t_total_s": (
            float(np.mean([r.t_sound_s + r.t_heuristic_s for r in results])) if n else 0.0
        ),
    }


def run(
    model_path,
    query: FairnessQuery,
    options: RunOptions = RunOptions(),
    net: Network | None = None,
    schema: AttributeSchema | None = None,
) -> RunReport:
    """Verify a model against a query; returns the aggregated report.

    ``net``/``schema`` may be passed to skip re-reading ``model_path`` (the
    path is still recorded for replay).
    """
    t_start = time.monotonic()
    if net is None or schema is None:
        net, schema = load_portable(model_path)
    opts = options.effective(query)
    pred = build_predicate(query, schema, net)
    pset = partition(pred.domain_box, query, schema, shuffle_seed=opts.seed)
    if pset.diagnostic:
        log.warning("%s", pset.diagnostic)
    net_profile = (
        profile(net, schema, size=opts.profile_size, seed=_profile_seed(opts.seed))
        if opts.heuristic
        else None
    )

    deadline = t_start + float(opts.hard_timeout_s)
    stop = threading.Event()
    lock = threading.Lock()
    results: list[PartitionResult] = []
    positions = (
        enumerate(pset.ids_shuffled())
        if opts.only_partition is None
        else iter([(0, opts.only_partition)])
    )

    def next_item():
        with lock:
            return next(positions, None)

    def worker() -> None:
        session = SmtSession(opts.solver)
        try:
            while not stop.is_set() and time.monotonic() < deadline:
                item = next_item()
                if item is None:
                    return
                pos, pid = item
                part = pset.box(pid)
                res = verify_partition(
                    net,
                    schema,
                    pred,
                    part,
                    session,
                    soft_timeout_s=float(opts.soft_timeout_s),
                    seed=opts.seed,
                    heuristic=opts.heuristic,
                    tolerance_pct=opts.tolerance_pct,
                    net_profile=net_profile,
                    dump_smt_dir=opts.dump_smt_dir,
                    dump_bounds=opts.dump_bounds,
                )
                res.stream_position = pos
                with lock:
                    results.append(res)
                log.info(
                    "partition %d: %s (sound %.2fs%s)",
                    pid,
                    res.status.value,
                    res.t_sound_s,
                    f", heuristic {res.t_heuristic_s:.2f}s" if res.heuristic_attempted else "",
                )
                if res.status is Status.SAT and opts.stop_on_sat:
                    stop.set()
        finally:
            session.close()

    threads = [
        threading.Thread(target=worker, daemon=True)
        for _ in range(max(1, int(opts.jobs)))
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    results.sort(key=lambda r: r.stream_position)
    total = len(pset) if opts.only_partition is None else 1
    verdict = accumulate(results, total=total)

    solver_version = None
    try:
        with SmtSession(opts.solver) as s:
            solver_version = s.version()
            solver_command = s.command
    except Exception:
        from .smt import resolve_solver

        solver_command = resolve_solver(opts.solver)

    options_doc = {
        "jobs": opts.jobs,
        "seed": opts.seed,
        "soft_timeout_s": opts.soft_timeout_s,
        "hard_timeout_s": opts.hard_timeout_s,
        "max_attribute_size": opts.max_attribute_size,
        "stop_on_sat": opts.stop_on_sat,
        "heuristic": opts.heuristic,
        "tolerance_pct": opts.tolerance_pct,
        "profile_size": opts.profile_size,
        "only_partition": opts.only_partition,
    }
    notes = [
        "a neuron is removed by per-neuron verification when its positive "
        "phase is unsatisfiable over the predecessor bounds",
        "coverage counts regions decided sat or unsat over all regions",
    ]
    if any(r.counterexample_on_pruned_only for r in results):
        notes.append(
            "at least one counterexample violates the heuristically pruned "
            "network but not the original; it certifies the deployable "
            "pruned copy"
        )
    return RunReport(
        model_path=str(model_path),
        query_doc=query_to_doc(query, schema),
        options_doc=options_doc,
        seed=opts.seed,
        solver_command=list(solver_command),
        solver_version=solver_version,
        partitions_total=total,
        results=results,
        verdict=verdict.status,
        coverage_pct=verdict.coverage_pct,
        counts=verdict.counts,
        totals=_totals(results),
        counterexample=verdict.counterexample,
        wall_time_s=time.monotonic() - t_start,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# Replay and pruned-model export


@dataclass
class ReplayOutcome:
    fresh: PartitionResult
    stored: PartitionResult
    status_match: bool
    stored_counterexample_valid: bool | None


def _rebuild_from_report(report: RunReport):
    path = Path(report.model_path)
    if not path.exists():
        raise ReplayError(f"model file {path} no longer exists")
    net, schema = load_portable(path)
    query = query_from_doc(report.query_doc, schema)
    opts = RunOptions(
        seed=report.seed,
        soft_timeout_s=report.options_doc.get("soft_timeout_s"),
        hard_timeout_s=report.options_doc.get("hard_timeout_s"),
        max_attribute_size=report.options_doc.get("max_attribute_size"),
        heuristic=report.options_doc.get("heuristic", True),
        tolerance_pct=report.options_doc.get("tolerance_pct", 5.0),
        profile_size=report.options_doc.get("profile_size", 1000),
    ).effective(query)
    pred = build_predicate(query, schema, net)
    pset = partition(pred.domain_box, query, schema, shuffle_seed=report.seed)
    return net, schema, query, opts, pred, pset


def load_report(path) -> RunReport:
    try:
        return RunReport.from_doc(json.loads(Path(path).read_text()))
    except (KeyError, ValueError, OSError) as exc:
        raise ReplayError(f"cannot load report {path}: {exc}") from exc


def replay(report_path, partition_id: int, solver=None) -> ReplayOutcome:
    """Re-verify one region recorded in a report with the same seeds.

    The fresh status should match unless the solver is nondeterministic; a
    mismatch is flagged, never hidden.  A stored sat counterexample is
    revalidated against the model regardless.
    """
    report = load_report(report_path)
    net, schema, query, opts, pred, pset = _rebuild_from_report(report)
    stored = next(
        (r for r in report.results if r.partition_id == partition_id), None
    )
    if stored is None:
        raise ReplayError(f"report has no result for partition {partition_id}")
    if not 0 <= partition_id < len(pset):
        raise ReplayError(f"partition id {partition_id} out of range")
    part = pset.box(partition_id)
    if part.box != stored.box:
        raise ReplayError(
            "stored region does not match the regenerated one; "
            "model, query, or seed changed since the report was written"
        )
    stored_ce_valid = None
    if stored.counterexample is not None:
        stored_ce_valid = check_counterexample(
            pred, net, stored.counterexample[0], stored.counterexample[1]
        )
    net_profile = (
        profile(net, schema, size=opts.profile_size, seed=_profile_seed(opts.seed))
        if opts.heuristic
        else None
    )
    with SmtSession(solver if solver is not None else report.solver_command) as session:
        fresh = verify_partition(
            net,
            schema,
            pred,
            part,
            session,
            soft_timeout_s=float(opts.soft_timeout_s),
            seed=opts.seed,
            heuristic=opts.heuristic,
            tolerance_pct=opts.tolerance_pct,
            net_profile=net_profile,
        )
    return ReplayOutcome(
        fresh=fresh,
        stored=stored,
        status_match=fresh.status == stored.status,
        stored_counterexample_valid=stored_ce_valid,
    )


def pruned_for_partition(
    report_path, partition_id: int, solver=None
) -> tuple[PrunedNetwork, AttributeSchema, PartitionResult]:
    """Recompute the pruned network that produced a partition's verdict."""
    report = load_report(report_path)
    net, schema, query, opts, pred, pset = _rebuild_from_report(report)
    stored = next(
        (r for r in report.results if r.partition_id == partition_id), None
    )
    if stored is None:
        raise ReplayError(f"report has no result for partition {partition_id}")
    part = pset.box(partition_id)
    if part.box != stored.box:
        raise ReplayError(
            "stored region does not match the regenerated one; "
            "model, query, or seed changed since the report was written"
        )
    nb = neuron_bounds(net, part.box)
    with SmtSession(solver if solver is not None else report.solver_command) as session:
        pruned = sound_prune(
            net, part.box, nb, session, timeout_s=float(opts.soft_timeout_s)
        )
    if stored.decided_phase == "heuristic" or (
        stored.heuristic_attempted and stored.status is Status.UNKNOWN
    ):
        net_profile = profile(
            net, schema, size=opts.profile_size, seed=_profile_seed(opts.seed)
        )
        pruned = heuristic_prune(pruned, net_profile, opts.tolerance_pct)
    return pruned, schema, stored
