"""Packaged experiments: each returns its checks and the report files it produced."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from pushsync.baseline import CALLBACK_PUSH, FEED_FETCH, PING, REAL, SIMULATED, compare_architectures
from pushsync.harness.reports import intervals_to_csv, runs_to_csv, table
from pushsync.harness.simulation import RunReport, pick_drop_uris, run_experiment
from pushsync.harness.workload import WorkloadConfig, generate_workload

logger = logging.getLogger(__name__)

# CNs per run in the six eight-hour runs of the original deployment
REFERENCE_RUN_TOTALS = (13_819, 32_453, 6_910, 24_400, 11_850, 14_937)
ACCURACY_SEEDS = 20
ACCURACY_EVENTS = 10_000
FAULTS_INJECTED = 5
PAYLOAD_RATIO_RANGE = (0.05, 0.3)
COMPRESSED_TOLERANCE = 2.0
COMPARE_CYCLES = 40
FEED_WINDOW = 64  # entries; larger than one cycle's burst so nothing is missed


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class ExperimentResult:
    preset: str
    checks: list[Check]
    files: dict[str, str] = field(default_factory=dict)
    summary: str = ""
    runs: list[RunReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def write(self, directory: Path | str) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        out = []
        for name, content in sorted(self.files.items()):
            p = d / name
            p.write_bytes(content.encode("utf-8"))
            out.append(p)
        return out


def _scaled(n: int, scale: float, floor: int = 1) -> int:
    return max(floor, round(n * scale))


def _run_dir(data_dir: Path | None, run_id: str) -> Path | None:
    return None if data_dir is None else Path(data_dir) / f"run-{run_id}"


def lockstep(base: WorkloadConfig, seed: int, scale: float,
             data_dir: Path | None = None) -> ExperimentResult:
    """One bursty run at run-1 scale; every interval must end drained."""
    cfg = base.replace(seed=seed, total_events=_scaled(REFERENCE_RUN_TOTALS[0], scale))
    r = run_experiment(cfg, run_id="1", data_dir=_run_dir(data_dir, "1"))
    undrained = [
        f"{d.name}#{i}" for d in r.destinations
        for i, ok in enumerate(d.queue.drained_at_interval_end) if not ok
    ]
    checks = [
        Check("lockstep-drained", r.complete and not undrained,
              f"{r.intervals} intervals x {len(r.destinations)} destinations, "
              f"undrained={undrained[:5] or 'none'}"),
        Check("lockstep-maxq-live", r.total_cns == 0 or r.max_queue > 0,
              ", ".join(f"MaxQ {d.name}={d.max_queue}" for d in r.destinations)),
    ]
    return ExperimentResult(
        "lockstep", checks,
        {"lockstep.csv": runs_to_csv([r]), "lockstep-intervals.csv": intervals_to_csv([r]),
         "lockstep.txt": table([r])},
        table([r]), [r],
    )


def table1(base: WorkloadConfig, seed: int, scale: float,
           data_dir: Path | None = None) -> ExperimentResult:
    """Six runs sized like the original six, rendered as one table."""
    reports = []
    for i, total in enumerate(REFERENCE_RUN_TOTALS):
        run_id = str(i + 1)
        cfg = base.replace(seed=seed + i, total_events=_scaled(total, scale))
        reports.append(run_experiment(cfg, run_id=run_id, data_dir=_run_dir(data_dir, run_id)))
    checks = [
        Check("table1-drained", all(r.complete and r.all_drained for r in reports),
              "runs with an undrained interval: "
              + (",".join(r.run_id for r in reports if not r.all_drained) or "none")),
        Check("table1-diff-zero", all(r.diff_count == 0 for r in reports),
              f"total diff {sum(r.diff_count for r in reports)}"),
    ]
    text = table(reports)
    return ExperimentResult(
        "table1", checks,
        {"table1.csv": runs_to_csv(reports), "table1-intervals.csv": intervals_to_csv(reports),
         "table1.txt": text},
        text, reports,
    )


def accuracy(base: WorkloadConfig, seed: int, scale: float,
             data_dir: Path | None = None, seeds: int = ACCURACY_SEEDS) -> ExperimentResult:
    """Diff must be zero on every seed; k dropped CNs must show up as diff k."""
    events = _scaled(ACCURACY_EVENTS, scale)
    shaped = base.replace(
        total_events=events,
        baseline_resources=_scaled(1_000, scale, floor=50),
        category_probability=max(base.category_probability, 0.2),
        spelling_variation=max(base.spelling_variation, 0.2),
    )
    reports = []
    for i in range(seeds):
        run_id = str(i + 1)
        reports.append(run_experiment(shaped.replace(seed=seed + i), run_id=run_id,
                                      data_dir=_run_dir(data_dir, run_id)))
    bad = [f"seed {r.seed}: {r.diff_count}" for r in reports if r.diff_count or not r.complete]
    dirty_dest = [f"seed {r.seed}/{d.name}" for r in reports for d in r.destinations if d.diff.count]

    # one event per planted URI and no category copies: k URIs = k dropped CNs
    workload = generate_workload(base.replace(seed=seed, total_events=events,
                                              category_probability=0.0))
    k = FAULTS_INJECTED
    planted = pick_drop_uris(workload, k)
    faulty = run_experiment(workload, run_id="fault", drop_uris=planted)
    found = faulty.destinations[0].diff
    checks = [
        Check("accuracy-diff-zero", not bad and not dirty_dest,
              f"{seeds} seeds x {events} events, min CNs/run "
              f"{min(r.total_cns for r in reports)}; nonzero: {(bad + dirty_dest)[:5] or 'none'}"),
        Check("accuracy-fault-injection",
              found.count == k and sorted(found.missing_at_dest) == sorted(planted),
              f"planted {k} dropped URIs, diff found {found.count}"),
    ]
    text = table(reports)
    return ExperimentResult(
        "accuracy", checks,
        {"accuracy.csv": runs_to_csv(reports + [faulty]), "accuracy.txt": text},
        text, reports + [faulty],
    )


def payload(base: WorkloadConfig, seed: int, scale: float,
            data_dir: Path | None = None) -> ExperimentResult:
    """Changeset bytes vs full-GET bytes for updates touching 10% of lines."""
    cfg = base.replace(seed=seed, total_events=_scaled(REFERENCE_RUN_TOTALS[0], scale),
                       changed_fraction=0.1)
    r = run_experiment(cfg, run_id="1", data_dir=_run_dir(data_dir, "1"))
    p = r.payload
    lo, hi = PAYLOAD_RATIO_RANGE
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["changeset_bytes", "get_bytes", "changeset_to_get", "compression_coefficient",
                "get_compressed_estimate", "changeset_compression", "changeset_compressed",
                "compressed_get_over_changeset"])
    w.writerow([p.changeset_total, p.get_total, f"{p.changeset_to_get_ratio:.4f}",
                p.coefficient, p.get_compressed_estimate, f"{p.changeset_coefficient:.4f}",
                p.changeset_compressed_estimate, f"{p.compressed_ratio:.4f}"])
    checks = [
        Check("payload-ratio", lo <= p.changeset_to_get_ratio <= hi,
              f"changeset/GET = {p.changeset_to_get_ratio:.4f}, want [{lo}, {hi}]"),
        Check("payload-compressed",
              1 / COMPRESSED_TOLERANCE <= p.compressed_ratio <= COMPRESSED_TOLERANCE,
              f"compressed GET estimate {p.get_compressed_estimate} vs compressed changesets "
              f"{p.changeset_compressed_estimate} = {p.compressed_ratio:.2f}x, "
              f"want within {COMPRESSED_TOLERANCE:g}x"),
    ]
    summary = (f"changesets {p.changeset_total:,} B, GET {p.get_total:,} B "
               f"(ratio {p.changeset_to_get_ratio:.3f}); compressed: GET~{p.get_compressed_estimate:,} B "
               f"vs changesets {p.changeset_compressed_estimate:,} B\n")
    return ExperimentResult("payload", checks,
                            {"payload.csv": buf.getvalue(), "payload-run.csv": runs_to_csv([r])},
                            summary, [r])


def architectures(base: WorkloadConfig, seed: int, scale: float,
                  data_dir: Path | None = None) -> ExperimentResult:
    """Real push vs simulated push on the same changesets."""
    cycles = _scaled(COMPARE_CYCLES, scale, floor=2)
    cfg = base.replace(seed=seed, profile="steady", total_events=None,
                       duration_ms=cycles * base.poll_interval_ms, mean_events_per_cycle=20,
                       baseline_resources=200, category_probability=0.0)
    w = generate_workload(cfg)
    changesets = [cs for _, cs in w.changesets]
    rep = compare_architectures(changesets, destinations=2, baseline=w.baseline)
    windowed = compare_architectures(changesets, destinations=2, baseline=w.baseline,
                                     window=FEED_WINDOW)
    n = rep.active_cycles
    extra_pings = rep.count(SIMULATED, PING) - rep.count(REAL, PING)
    extra_fetches = rep.count(SIMULATED, FEED_FETCH) - rep.count(REAL, FEED_FETCH)
    extra_cn = rep.cn_side_total(SIMULATED) - rep.cn_side_total(REAL)
    hist = rep.fetch_bytes_history
    growing = len(hist) >= 2 and all(b > a for a, b in zip(hist, hist[1:]))
    checks = [
        Check("compare-extra-pings", extra_pings == n, f"+{extra_pings} pings over {n} cycles"),
        Check("compare-extra-fetches", extra_fetches == n, f"+{extra_fetches} feed fetches over {n} cycles"),
        Check("compare-cn-side", extra_cn == 2 * n,
              f"CN-side interactions differ by {extra_cn} (2N = {2 * n}); "
              f"callback pushes {rep.count(SIMULATED, CALLBACK_PUSH)}"),
        Check("compare-replicas", rep.replicas_identical and rep.replicas_match_source
              and windowed.replicas_identical,
              f"identical={rep.replicas_identical}, match source={rep.replicas_match_source}"),
        Check("compare-feed-growth", growing and max(windowed.fetch_bytes_history) < hist[-1],
              f"unbounded fetch bytes {hist[0] if hist else 0} -> {hist[-1] if hist else 0}; "
              f"window {FEED_WINDOW} peak {max(windowed.fetch_bytes_history, default=0)}"),
    ]
    summary = "".join(f"{cls},{arch},{count},{nbytes}\n" for cls, arch, count, nbytes in rep.rows())
    return ExperimentResult(
        "compare-architectures", checks,
        {"compare-architectures.csv": rep.to_csv(),
         "compare-architectures-windowed.csv": windowed.to_csv()},
        "class,arch,count,bytes\n" + summary,
    )


PRESETS: dict[str, Callable[..., ExperimentResult]] = {
    "lockstep": lockstep,
    "accuracy": accuracy,
    "payload": payload,
    "compare-architectures": architectures,
    "table1": table1,
}


def run_preset(name: str, base: WorkloadConfig | None = None, seed: int = 7, scale: float = 1.0,
               data_dir: Path | str | None = None) -> ExperimentResult:
    try:
        fn = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    if scale <= 0:
        raise ValueError("scale must be positive")
    base = base or WorkloadConfig()
    return fn(base, seed, scale, Path(data_dir) if data_dir is not None else None)
