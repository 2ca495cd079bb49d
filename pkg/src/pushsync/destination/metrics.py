"""Per-interval queue metrics: max length and whether the queue drained."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

from pushsync.core.clock import Clock


@dataclass
class QueueStats:
    current_len: int = 0
    max_len_per_interval: list[tuple[int, int]] = field(default_factory=list)
    drained_at_interval_end: list[bool] = field(default_factory=list)

    @property
    def max_queue(self) -> int:
        return max((m for _, m in self.max_len_per_interval), default=0)

    @property
    def all_drained(self) -> bool:
        return all(self.drained_at_interval_end)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("interval_index,max_queue,drained\n")
        for (idx, mx), drained in zip(self.max_len_per_interval, self.drained_at_interval_end):
            buf.write(f"{idx},{mx},{'true' if drained else 'false'}\n")
        return buf.getvalue()


class QueueMonitor:
    """Samples a queue length on every change and folds samples into intervals.

    The length only changes at sample points, so the length at an interval
    boundary is the last length recorded before it; a sample exactly on a
    boundary belongs to the next interval. Callers must serialize calls
    (the Destination holds its queue lock).
    """

    def __init__(self, clock: Clock, interval_ms: int, start_ms: int | None = None) -> None:
        if interval_ms <= 0:
            raise ValueError("interval_ms must be positive")
        self.clock = clock
        self.interval_ms = interval_ms
        self.start_ms = clock.now_ms() if start_ms is None else start_ms
        self._index = 0
        self._cur_max = 0
        self._len = 0
        self._stats = QueueStats()

    def _index_at(self, t_ms: int) -> int:
        return max(0, (t_ms - self.start_ms) // self.interval_ms)

    def _roll_to(self, index: int) -> None:
        while self._index < index:
            self._stats.max_len_per_interval.append((self._index, self._cur_max))
            self._stats.drained_at_interval_end.append(self._len == 0)
            self._index += 1
            self._cur_max = self._len

    def record(self, length: int) -> None:
        self._roll_to(self._index_at(self.clock.now_ms()))
        self._len = length
        if length > self._cur_max:
            self._cur_max = length

    def close_until(self, t_ms: int | None = None) -> None:
        """Finalize every interval that ends at or before ``t_ms``."""
        t = self.clock.now_ms() if t_ms is None else t_ms
        self._roll_to(self._index_at(t))

    @property
    def closed_intervals(self) -> int:
        return self._index

    def stats(self) -> QueueStats:
        s = self._stats
        return QueueStats(self._len, list(s.max_len_per_interval), list(s.drained_at_interval_end))
