from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now_ms(self) -> int: ...


class WallClock:
    def now_ms(self) -> int:
        return time.time_ns() // 1_000_000


class VirtualClock:
    """Clock that only moves when told to. Owned by the simulation harness."""

    def __init__(self, start_ms: int = 0) -> None:
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def advance_to(self, t_ms: int) -> None:
        if t_ms < self._now:
            raise ValueError(f"cannot go back in time: {t_ms} < {self._now}")
        self._now = t_ms

    def advance(self, delta_ms: int) -> None:
        self.advance_to(self._now + delta_ms)
