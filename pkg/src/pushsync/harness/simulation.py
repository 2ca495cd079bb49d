"""Discrete-event runs of Source -> Broker -> Destinations on a virtual clock.

The harness owns the clock. Three kinds of events are scheduled:

* interval boundaries, which close queue-metric intervals;
* Source poll cycles, which ingest changesets and publish a CN burst;
* Destination wake-ups, which process the head CN and then stay busy for
  the simulated fetch latency.

At equal timestamps boundaries run first, then polls, then wake-ups, so a
burst arriving exactly on a boundary is counted in the new interval.
"""

from __future__ import annotations

import gzip
import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from pushsync.broker.core import Broker, CallbackSink
from pushsync.core.clock import VirtualClock
from pushsync.core.types import ChangeNotification, ChannelPath, EventKind
from pushsync.core.uri import normalize_uri
from pushsync.destination.destination import Destination
from pushsync.destination.metrics import QueueStats
from pushsync.destination.replica import FileReplicaStore, MemoryReplicaStore, ReplicaStore
from pushsync.harness.diff import (
    COMPRESSION_COEFFICIENT,
    DiffReport,
    PayloadReport,
    payload_accounting,
    recursive_diff,
)
from pushsync.harness.workload import Workload, WorkloadConfig, generate_workload
from pushsync.source.feed import ListFeed
from pushsync.source.source import CycleReport, Source

logger = logging.getLogger(__name__)

_BOUNDARY, _POLL, _WAKE = 0, 1, 2


@dataclass(frozen=True)
class DestinationSpec:
    """How one simulated Destination behaves.

    ``latency_ms`` is charged per fetch attempt; a delete costs
    ``delete_ms``. ``channel`` defaults to the Source's all-changes channel.
    """

    name: str
    latency_ms: int = 40
    delete_ms: int = 1
    store: str = "memory"
    channel: str | None = None


# a far and a near replica, after the two Destinations of the original deployment
LIV = DestinationSpec("LIV", latency_ms=40, store="file")
SFI = DestinationSpec("SFI", latency_ms=5, store="memory")
DEFAULT_DESTINATIONS = (LIV, SFI)


@dataclass
class DestinationResult:
    name: str
    latency_ms: int
    queue: QueueStats
    diff: DiffReport
    received: int
    pulls: int
    pull_bytes: int
    dropped_cns: int = 0
    outcomes: dict[str, int] = field(default_factory=dict)

    @property
    def max_queue(self) -> int:
        return self.queue.max_queue

    @property
    def drained(self) -> bool:
        return self.queue.all_drained


@dataclass
class RunReport:
    run_id: str
    seed: int
    total_cns: int
    events: int
    excluded: int
    intervals: int
    destinations: list[DestinationResult]
    payload: PayloadReport
    ledger: dict[str, tuple[int, int]] = field(default_factory=dict)
    complete: bool = True
    error: str | None = None
    wall_seconds: float = 0.0

    @property
    def max_queue(self) -> int:
        return max((d.max_queue for d in self.destinations), default=0)

    @property
    def all_drained(self) -> bool:
        return all(d.drained for d in self.destinations)

    @property
    def diff_count(self) -> int:
        """Diff against the first Destination."""
        return self.destinations[0].diff.count if self.destinations else 0

    @property
    def diff_pct(self) -> float:
        return 100.0 * self.diff_count / self.total_cns if self.total_cns else 0.0

    def destination(self, name: str) -> DestinationResult:
        for d in self.destinations:
            if d.name == name:
                return d
        raise KeyError(name)


class _EventLoop:
    def __init__(self, clock: VirtualClock) -> None:
        self.clock = clock
        self._heap: list[tuple[int, int, int, Callable[[], None]]] = []
        self._tie = itertools.count()

    def at(self, t_ms: int, priority: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._heap, (t_ms, priority, next(self._tie), fn))

    def run(self) -> None:
        while self._heap:
            t, _, _, fn = heapq.heappop(self._heap)
            self.clock.advance_to(t)
            fn()


class _PacedPublisher:
    """Hands CNs to the broker one every ``spacing_ms``, in publish order.

    A Source emitting a burst does not put every CN on the wire at once;
    pacing lets Destination queues reflect their service rate.
    """

    def __init__(self, broker: Broker, loop: _EventLoop, spacing_ms: int) -> None:
        self.broker = broker
        self.loop = loop
        self.spacing_ms = spacing_ms
        self._next_free = 0

    def create_channel(self, path: ChannelPath):
        return self.broker.create_channel(path)

    def publish(self, path: ChannelPath, cn: ChangeNotification) -> None:
        if self.spacing_ms <= 0:
            self.broker.publish(path, cn)
            return
        t = max(self.loop.clock.now_ms(), self._next_free)
        self._next_free = t + self.spacing_ms
        self.loop.at(t, _POLL, lambda: self.broker.publish(path, cn))


class _SimDestination:
    """Wraps a Destination with single-worker service timing."""

    def __init__(self, spec: DestinationSpec, dest: Destination, loop: _EventLoop,
                 drop: frozenset[str]) -> None:
        self.spec = spec
        self.dest = dest
        self.loop = loop
        self.drop = drop
        self.dropped = 0
        self.busy = False
        self.backoff_ms = 0.0

    def sleep(self, ms: float) -> None:
        # retries inside process_one; the wait is added to the service time
        self.backoff_ms += ms

    def on_cn(self, cn: ChangeNotification) -> None:
        if cn.uri in self.drop:
            self.dropped += 1
            return
        self.dest.on_cn(cn)
        if not self.busy:
            self.busy = True
            self.loop.at(self.loop.clock.now_ms(), _WAKE, self.wake)

    def wake(self) -> None:
        if self.dest.queue_len == 0:
            self.busy = False
            return
        attempts = self.dest.counters.fetch_attempts
        self.backoff_ms = 0.0
        self.dest.process_one()
        attempts = self.dest.counters.fetch_attempts - attempts
        if attempts:
            service = attempts * self.spec.latency_ms + round(self.backoff_ms)
        else:
            service = self.spec.delete_ms
        self.loop.at(self.loop.clock.now_ms() + service, _WAKE, self.wake)


def _make_store(spec: DestinationSpec, data_dir: Path | None) -> ReplicaStore:
    if spec.store == "file" and data_dir is not None:
        return FileReplicaStore(data_dir / spec.name)
    return MemoryReplicaStore()


def changeset_gzip_bytes(workload: Workload) -> int:
    """Bytes of the workload's changeset files after gzip, file by file."""
    total = 0
    for _, cs in workload.changesets:
        for lines in (cs.updated_lines, cs.deleted_lines):
            if lines:
                data = "".join(line + "\n" for line in lines).encode("utf-8")
                total += len(gzip.compress(data, mtime=0))
    return total


def run_experiment(
    cfg: WorkloadConfig | Workload,
    destinations: Sequence[DestinationSpec] = DEFAULT_DESTINATIONS,
    *,
    run_id: str = "1",
    data_dir: Path | str | None = None,
    drop_uris: Iterable[str] = (),
    compression_coefficient: float = COMPRESSION_COEFFICIENT,
    changeset_coefficient: float | None = None,
    publish_spacing_ms: int = 10,
) -> RunReport:
    """Drive one run to quiescence and report on it.

    ``drop_uris`` plants faults: every CN for those URIs is discarded before
    it reaches any Destination. Payload GET bytes are those pulled by the
    first Destination. Compressed changeset bytes are measured with gzip
    unless ``changeset_coefficient`` is given. CNs leave the Source one
    every ``publish_spacing_ms`` (0 delivers a whole burst instantly).
    """
    started = time.perf_counter()
    workload = cfg if isinstance(cfg, Workload) else generate_workload(cfg)
    cfg = workload.config
    if not destinations:
        raise ValueError("at least one destination is required")
    names = [d.name for d in destinations]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate destination names: {names}")

    clock = VirtualClock(0)
    loop = _EventLoop(clock)
    source = Source(clock=clock, root_channel=ChannelPath.parse(cfg.root_channel))
    source.load_baseline(workload.baseline)
    source.assign_categories(workload.baseline_categories)
    broker = Broker()
    feed = ListFeed(workload.changesets, clock)
    drop = frozenset(normalize_uri(u) for u in drop_uris)
    root = Path(data_dir) if data_dir is not None else None

    sims: list[_SimDestination] = []
    for spec in destinations:
        dest = Destination(spec.name, _make_store(spec, root), source.get_representation,
                           clock=clock, interval_ms=cfg.interval_ms)
        sim = _SimDestination(spec, dest, loop, drop)
        dest.sleep = sim.sleep
        channel = ChannelPath.parse(spec.channel) if spec.channel else source.root_channel
        broker.create_channel(channel)
        broker.subscribe(spec.name, channel, CallbackSink(sim.on_cn))
        sims.append(sim)

    reports: list[CycleReport] = []
    publisher = _PacedPublisher(broker, loop, publish_spacing_ms)

    def poll() -> None:
        reports.append(source.poll_cycle(feed, publisher))

    def boundary() -> None:
        for s in sims:
            s.dest.monitor.close_until(clock.now_ms())

    for t in workload.cycle_times:
        loop.at(t, _POLL, poll)
    for k in range(1, cfg.intervals + 1):
        loop.at(k * cfg.interval_ms, _BOUNDARY, boundary)

    complete, error = True, None
    try:
        loop.run()
    except Exception as exc:  # a crashed component yields a partial report
        logger.exception("run %s aborted", run_id)
        complete, error = False, f"{type(exc).__name__}: {exc}"

    # work that spilled past the last planned boundary closes the final interval(s)
    end = max(cfg.intervals * cfg.interval_ms, clock.now_ms())
    end = -(-end // cfg.interval_ms) * cfg.interval_ms
    for s in sims:
        s.dest.monitor.close_until(end)

    touched = {ev.uri for r in reports for ev in r.events}
    results = []
    for s in sims:
        scope = _scope_for(source, s, touched)
        c = s.dest.counters
        results.append(DestinationResult(
            name=s.spec.name,
            latency_ms=s.spec.latency_ms,
            queue=s.dest.stats(),
            diff=recursive_diff(source.store, s.dest.store, scope),
            received=c.received,
            pulls=c.pulls,
            pull_bytes=c.pull_bytes,
            dropped_cns=s.dropped,
            outcomes={"applied": c.applied, "deleted": c.deleted,
                      "skipped_stale": c.skipped_stale, "fetch_failed": c.fetch_failed,
                      "lost": c.lost},
        ))

    changeset_total = sum(r.changeset_bytes for r in reports)
    get_total = results[0].pull_bytes
    if changeset_coefficient is None:
        compressed = changeset_gzip_bytes(workload)
        changeset_coefficient = compressed / changeset_total if changeset_total else 0.0
    payload = payload_accounting(changeset_total, get_total, compression_coefficient,
                                 changeset_coefficient)

    b = broker.counters
    return RunReport(
        run_id=run_id,
        seed=cfg.seed,
        total_cns=sum(r.cns_published for r in reports),
        events=sum(r.total_events for r in reports),
        excluded=sum(r.excluded_lines for r in reports),
        intervals=len(results[0].queue.max_len_per_interval),
        destinations=results,
        payload=payload,
        ledger={
            "cn_publish": (b.published, 0),
            "cn_deliver": (b.delivered, 0),
            "resource_pull": (sum(d.pulls for d in results), sum(d.pull_bytes for d in results)),
        },
        complete=complete,
        error=error,
        wall_seconds=time.perf_counter() - started,
    )


def _scope_for(source: Source, sim: _SimDestination, touched: set[str]) -> set[str]:
    """URIs a Destination is responsible for: touched during the run and
    carried by its channel (or a descendant of it)."""
    if sim.spec.channel is None:
        return set(touched)
    sub = ChannelPath.parse(sim.spec.channel)
    return {
        u for u in touched
        if any(c == sub or sub.is_ancestor_of(c) for c in source.channels_for(u))
    }


def pick_drop_uris(workload: Workload, k: int) -> list[str]:
    """First ``k`` URIs (in event order) touched by exactly one create/update.

    Dropping every CN for such a URI leaves it missing at the Destination,
    so a diff of the run must count exactly ``k``.
    """
    seen: dict[str, list[EventKind]] = {}
    for ev in workload.events:
        seen.setdefault(normalize_uri(ev.uri), []).append(ev.kind)
    eligible = [u for u, kinds in seen.items()
                if len(kinds) == 1 and kinds[0] is not EventKind.DELETE]
    if len(eligible) < k:
        raise ValueError(f"only {len(eligible)} single-event URIs available, need {k}")
    return eligible[:k]
