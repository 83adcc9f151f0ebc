"""Run-report persistence: JSON document, per-region CSV, summary table,
and rendered figures.

One verification run produces ``<out>.json`` (machine-readable, replayable)
plus, next to it, ``<out>.csv`` with one row per attempted region and three
PNG charts (status breakdown, compression ratios, solve times).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .runner import RunReport

_STATUS_COLORS = {
    "sat": "#d62728",
    "unsat": "#2ca02c",
    "unknown": "#7f7f7f",
    "error": "#9467bd",
}


def write_report(report: RunReport, out_path, figures: bool = True) -> list[Path]:
    """Persist a run; returns every file written."""
    out = Path(out_path)
    if out.suffix != ".json":
        out = out.with_suffix(out.suffix + ".json")
    out.parent.mkdir(parents=True, exist_ok=True)
    written = [out]
    out.write_text(json.dumps(report.to_doc(), indent=2) + "\n")
    csv_path = out.with_suffix(".csv")
    _write_csv(report, csv_path)
    written.append(csv_path)
    if figures:
        written.extend(render_figures(report, out.with_suffix("")))
    return written


def _write_csv(report: RunReport, path: Path) -> None:
    fields = [
        "partition_id",
        "status",
        "decided_phase",
        "t_sound_s",
        "t_heuristic_s",
        "compression_sound",
        "compression_heuristic",
        "heuristic_attempted",
        "heuristic_succeeded",
        "counterexample_x",
        "counterexample_xp",
        "box",
    ]
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for r in report.results:
            writer.writerow(
                {
                    "partition_id": r.partition_id,
                    "status": r.status.value,
                    "decided_phase": r.decided_phase or "",
                    "t_sound_s": f"{r.t_sound_s:.6f}",
                    "t_heuristic_s": f"{r.t_heuristic_s:.6f}",
                    "compression_sound": f"{r.compression_sound:.6f}",
                    "compression_heuristic": f"{r.compression_heuristic:.6f}",
                    "heuristic_attempted": int(r.heuristic_attempted),
                    "heuristic_succeeded": int(r.heuristic_succeeded),
                    "counterexample_x": (
                        "" if r.counterexample is None else json.dumps(r.counterexample[0].tolist())
                    ),
                    "counterexample_xp": (
                        "" if r.counterexample is None else json.dumps(r.counterexample[1].tolist())
                    ),
                    "box": json.dumps([[lo, hi] for lo, hi in r.box]),
                }
            )


def render_figures(report: RunReport, stem) -> list[Path]:
    """Render the standard charts as ``<stem>_*.png``."""
    stem = Path(stem)
    written = []

    counts = report.counts
    labels = [s for s in ("sat", "unsat", "unknown", "error") if counts.get(s)]
    values = [counts[s] for s in labels]
    unattempted = counts["total"] - counts["attempted"]
    if unattempted:
        labels.append("unattempted")
        values.append(unattempted)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    colors = [_STATUS_COLORS.get(l, "#bcbd22") for l in labels]
    ax.bar(labels, values, color=colors)
    ax.set_ylabel("regions")
    ax.set_title(f"verdict {report.verdict.value}, coverage {report.coverage_pct:.2f}%")
    fig.tight_layout()
    p = stem.parent / (stem.name + "_status.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    results = report.results
    if results:
        ids = [str(r.partition_id) for r in results]
        fig, ax = plt.subplots(figsize=(max(5, 0.22 * len(ids)), 3.2))
        ax.bar(ids, [r.compression_sound for r in results], label="sound", color="#1f77b4")
        ax.bar(
            ids,
            [r.compression_heuristic for r in results],
            bottom=[r.compression_sound for r in results],
            label="heuristic (additional)",
            color="#ff7f0e",
        )
        ax.set_ylim(0, 1)
        ax.set_ylabel("compression ratio")
        ax.set_xlabel("partition id")
        ax.legend(fontsize=8)
        if len(ids) > 30:
            ax.set_xticks([])
        fig.tight_layout()
        p = stem.parent / (stem.name + "_compression.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)

        fig, ax = plt.subplots(figsize=(max(5, 0.22 * len(ids)), 3.2))
        ax.bar(ids, [r.t_sound_s for r in results], label="sound", color="#1f77b4")
        ax.bar(
            ids,
            [r.t_heuristic_s for r in results],
            bottom=[r.t_sound_s for r in results],
            label="heuristic",
            color="#ff7f0e",
        )
        ax.set_ylabel("seconds")
        ax.set_xlabel("partition id")
        ax.legend(fontsize=8)
        if len(ids) > 30:
            ax.set_xticks([])
        fig.tight_layout()
        p = stem.parent / (stem.name + "_times.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)
    return written


def summary_table(report: RunReport) -> str:
    """Human-readable one-run summary (one header, one data row)."""
    c = report.counts
    t = report.totals
    headers = ["#P", "Cov%", "sat", "us", "un", "H", "HS", "C(S)", "C(H)", "SV", "HV", "Tot"]
    row = [
        str(c["attempted"]),
        f"{report.coverage_pct:.2f}",
        str(c["sat"]),
        str(c["unsat"]),
        str(c["unknown"] + c["error"]),
        str(t["heuristic_attempted"]),
        str(t["heuristic_succeeded"]),
        f"{t['avg_compression_sound']:.2f}",
        f"{t['avg_compression_heuristic']:.2f}",
        f"{t['avg_t_sound_s']:.2f}",
        f"{t['avg_t_heuristic_s']:.2f}",
        f"{t['avg_t_total_s']:.2f}",
    ]
    widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
    lines = [
        "  ".join(h.rjust(w) for h, w in zip(headers, widths)),
        "  ".join(v.rjust(w) for v, w in zip(row, widths)),
    ]
    out = [f"verdict: {report.verdict.value.upper()}  (regions: {report.partitions_total})"]
    out.extend(lines)
    if report.counterexample is not None:
        x, xp = report.counterexample
        out.append(f"counterexample x : {x.tolist()}")
        out.append(f"counterexample x': {xp.tolist()}")
    return "\n".join(out)
