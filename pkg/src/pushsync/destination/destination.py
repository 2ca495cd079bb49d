"""The Destination: FIFO of incoming CNs, content pulls, replica upkeep."""

from __future__ import annotations

import enum
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable

from pushsync.core.clock import Clock, WallClock
from pushsync.core.types import ChangeNotification, EventKind, ResourceVersion
from pushsync.destination.metrics import QueueMonitor, QueueStats
from pushsync.destination.replica import ReplicaStore
from pushsync.errors import Gone, NotFound, QueueOverflow

logger = logging.getLogger(__name__)

Fetcher = Callable[[str], ResourceVersion]

DEFAULT_INTERVAL_MS = 5 * 60 * 1000


class Outcome(str, enum.Enum):
    APPLIED = "applied"
    DELETED = "deleted"
    SKIPPED_STALE = "skipped_stale"
    FETCH_FAILED = "fetch_failed"


@dataclass
class DestinationCounters:
    received: int = 0
    processed: int = 0
    applied: int = 0
    deleted: int = 0
    skipped_stale: int = 0
    fetch_failed: int = 0
    requeued: int = 0
    lost: int = 0
    pulls: int = 0
    pull_bytes: int = 0
    fetch_attempts: int = 0


def _wall_sleep(ms: float) -> None:
    time.sleep(ms / 1000.0)


class Destination:
    """Keeps ``store`` in step with a Source by consuming CNs.

    ``on_cn`` is the delivery path: it appends and returns immediately.
    ``process_one`` takes the head CN and either deletes locally or pulls
    the latest representation through ``fetch``. Pulling always returns the
    Source's current version, so an old CN can fetch a newer body; a later
    CN for the same URI then finds the digest unchanged and is recorded as
    ``skipped_stale``.

    Several workers may consume concurrently; CNs for the same URI are never
    in flight at the same time.
    """

    def __init__(
        self,
        name: str,
        store: ReplicaStore,
        fetch: Fetcher,
        *,
        clock: Clock | None = None,
        interval_ms: int = DEFAULT_INTERVAL_MS,
        max_queue: int | None = None,
        retries: int = 3,
        backoff_ms: float = 100.0,
        sleep: Callable[[float], None] | None = None,
    ) -> None:
        self.name = name
        self.store = store
        self.fetch = fetch
        self.clock = clock or WallClock()
        self.max_queue = max_queue
        self.retries = retries
        self.backoff_ms = backoff_ms
        self.sleep = sleep or _wall_sleep
        self.counters = DestinationCounters()
        self.monitor = QueueMonitor(self.clock, interval_ms)
        self.last_cn: ChangeNotification | None = None
        self._queue: deque[ChangeNotification] = deque()
        self._cond = threading.Condition()
        self._inflight: set[str] = set()
        self._requeued: set[int] = set()

    # -- delivery side ------------------------------------------------------

    def on_cn(self, cn: ChangeNotification) -> int:
        with self._cond:
            if self.max_queue is not None and len(self._queue) >= self.max_queue:
                raise QueueOverflow(f"{self.name}: queue cap {self.max_queue} reached")
            self._queue.append(cn)
            n = len(self._queue)
            self.counters.received += 1
            self.monitor.record(n)
            self._cond.notify()
        return n

    def __len__(self) -> int:
        return len(self._queue)

    @property
    def queue_len(self) -> int:
        return len(self._queue)

    def pending(self) -> list[ChangeNotification]:
        with self._cond:
            return list(self._queue)

    # -- consumer side ------------------------------------------------------

    def _take_locked(self) -> ChangeNotification | None:
        if not self._inflight:
            cn = self._queue.popleft() if self._queue else None
        else:
            cn = None
            for i, candidate in enumerate(self._queue):
                if candidate.uri not in self._inflight:
                    cn = candidate
                    del self._queue[i]
                    break
        if cn is not None:
            self._inflight.add(cn.uri)
            self.monitor.record(len(self._queue))
        return cn

    def process_one(self) -> Outcome:
        """Process the head of the queue.

        Raises:
            IndexError: nothing to process.
        """
        with self._cond:
            cn = self._take_locked()
        if cn is None:
            raise IndexError(f"{self.name}: queue is empty")
        return self._run(cn)

    def _run(self, cn: ChangeNotification) -> Outcome:
        try:
            outcome = self._handle(cn)
        except BaseException:
            with self._cond:
                self._inflight.discard(cn.uri)
                self._cond.notify_all()
            raise
        with self._cond:
            self._inflight.discard(cn.uri)
            self.last_cn = cn
            self.counters.processed += 1
            setattr(self.counters, outcome.value, getattr(self.counters, outcome.value) + 1)
            self._cond.notify_all()
        return outcome

    def _handle(self, cn: ChangeNotification) -> Outcome:
        if cn.kind is EventKind.DELETE:
            self.store.delete(cn.uri)
            return Outcome.DELETED

        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            with self._cond:
                self.counters.fetch_attempts += 1
            try:
                rv = self.fetch(cn.uri)
            except (Gone, NotFound):
                self.store.delete(cn.uri)
                return Outcome.DELETED
            except Exception as exc:
                last_exc = exc
                if attempt < self.retries:
                    self.sleep(self.backoff_ms * (2 ** attempt))
                continue
            with self._cond:
                self.counters.pulls += 1
                self.counters.pull_bytes += len(rv.body)
            if self.store.get_digest(cn.uri) == rv.digest:
                return Outcome.SKIPPED_STALE
            self.store.put(cn.uri, rv.body)
            return Outcome.APPLIED

        with self._cond:
            if cn.seq in self._requeued:
                self._requeued.discard(cn.seq)
                self.counters.lost += 1
                logger.warning("%s: dropping CN %d for %s after retries: %s",
                               self.name, cn.seq, cn.uri, last_exc)
            else:
                self._requeued.add(cn.seq)
                self.counters.requeued += 1
                self._queue.append(cn)
                self.monitor.record(len(self._queue))
                self._cond.notify()
        return Outcome.FETCH_FAILED

    def drain(self) -> list[Outcome]:
        """Process until the queue is empty (single caller)."""
        out = []
        while self._queue:
            out.append(self.process_one())
        return out

    def run_consumer(
        self,
        stop: threading.Event,
        workers: int = 1,
        interval_ms: int | None = None,
    ) -> QueueStats:
        """Consume until ``stop`` is set, then return the queue statistics.

        Intervals are timed on this Destination's clock; a fresh monitor is
        started when ``interval_ms`` is given.
        """
        if interval_ms is not None:
            with self._cond:
                self.monitor = QueueMonitor(self.clock, interval_ms)
                self.monitor.record(len(self._queue))

        def worker() -> None:
            while True:
                with self._cond:
                    cn = self._take_locked()
                    while cn is None:
                        if stop.is_set():
                            return
                        self._cond.wait(0.05)
                        self.monitor.close_until()
                        cn = self._take_locked()
                try:
                    self._run(cn)
                except Exception:
                    logger.exception("%s: unexpected failure processing CN %d", self.name, cn.seq)

        threads = [
            threading.Thread(target=worker, name=f"{self.name}-worker-{i}", daemon=True)
            for i in range(max(1, workers))
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        with self._cond:
            self.monitor.close_until()
            return self.monitor.stats()

    def stats(self) -> QueueStats:
        with self._cond:
            return self.monitor.stats()

    def replica_digest_listing(self) -> list[tuple[str, str]]:
        return self.store.listing()
