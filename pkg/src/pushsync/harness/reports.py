"""CSV and text renderings of run reports. Output bytes depend only on the
report fields, never on wall-clock timings."""

from __future__ import annotations

import csv
import io
from typing import Sequence

from pushsync.harness.simulation import RunReport

RUN_COLUMNS = (
    "run_id", "seed", "complete", "total_cns", "events", "excluded", "intervals",
    "destination", "latency_ms", "max_queue", "drained", "diff_count", "diff_pct",
    "received", "pulls", "pull_bytes", "changeset_bytes", "get_bytes",
    "get_compressed_estimate", "changeset_compressed_estimate",
)


def _flag(b: bool) -> str:
    return "true" if b else "false"


def runs_to_csv(reports: Sequence[RunReport]) -> str:
    """One row per (run, Destination). The diff columns are per Destination."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for r in reports:
        p = r.payload
        for d in r.destinations:
            pct = 100.0 * d.diff.count / r.total_cns if r.total_cns else 0.0
            w.writerow([
                r.run_id, r.seed, _flag(r.complete), r.total_cns, r.events, r.excluded,
                r.intervals, d.name, d.latency_ms, d.max_queue, _flag(d.drained),
                d.diff.count, f"{pct:.4f}", d.received, d.pulls, d.pull_bytes,
                p.changeset_total, p.get_total, p.get_compressed_estimate,
                p.changeset_compressed_estimate,
            ])
    return buf.getvalue()


def intervals_to_csv(reports: Sequence[RunReport]) -> str:
    """Per-interval MaxQ and drain flag for every run and Destination."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run_id", "destination", "interval_index", "max_queue", "drained"])
    for r in reports:
        for d in r.destinations:
            for (idx, mx), drained in zip(d.queue.max_len_per_interval,
                                          d.queue.drained_at_interval_end):
                w.writerow([r.run_id, d.name, idx, mx, _flag(drained)])
    return buf.getvalue()


def format_diff(count: int, total: int) -> str:
    if count == 0:
        return "0 (0.0%)"
    return f"{count} ({100.0 * count / total:.3f}%)" if total else str(count)


def table(reports: Sequence[RunReport], source_name: str = "SRC") -> str:
    """Text table with the columns Run, Total CNs, Diff, MaxQ per Destination."""
    if not reports:
        return "(no runs)\n"
    first = reports[0]
    dest_names = [d.name for d in first.destinations]
    headers = (["Run", "Total CNs", f"Diff {source_name}-{dest_names[0]}"]
               + [f"MaxQ {n}" for n in dest_names] + ["Drained", "Excluded"])
    rows = []
    for r in reports:
        rows.append(
            [r.run_id, f"{r.total_cns:,}", format_diff(r.diff_count, r.total_cns)]
            + [str(r.destination(n).max_queue) for n in dest_names]
            + ["yes" if r.all_drained else "NO", str(r.excluded)]
            + ([] if r.complete else [f"INCOMPLETE: {r.error}"])
        )
    total = sum(r.total_cns for r in reports)
    diffs = sum(r.diff_count for r in reports)
    rows.append(["Total", f"{total:,}", format_diff(diffs, total)]
                + ["" for _ in dest_names] + ["", str(sum(r.excluded for r in reports))])

    widths = [max(len(h), *(len(row[i]) for row in rows if i < len(row)))
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        cells = [c.rjust(w) for c, w in zip(row, widths)] + row[len(widths):]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
