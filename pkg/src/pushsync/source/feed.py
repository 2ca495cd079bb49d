"""Where the Source finds new changesets."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Protocol

from pushsync.core.changeset_io import complete_cycles, read_changeset
from pushsync.core.clock import Clock
from pushsync.core.types import Changeset
from pushsync.errors import FeedUnavailable

logger = logging.getLogger(__name__)


class ChangesetFeed(Protocol):
    def poll(self) -> list[Changeset]:
        """Changesets that became available since the last poll, by cycle_id."""
        ...


class ListFeed:
    """In-memory feed of ``(available_at_ms, changeset)`` pairs on a clock."""

    def __init__(self, items: Iterable[tuple[int, Changeset]], clock: Clock) -> None:
        self._items = sorted(items, key=lambda it: (it[0], it[1].cycle_id))
        self._clock = clock
        self._next = 0

    def poll(self) -> list[Changeset]:
        now = self._clock.now_ms()
        out = []
        while self._next < len(self._items) and self._items[self._next][0] <= now:
            out.append(self._items[self._next][1])
            self._next += 1
        return sorted(out, key=lambda cs: cs.cycle_id)

    @property
    def exhausted(self) -> bool:
        return self._next >= len(self._items)


class DirectoryFeed:
    """Watches a directory for ``<cycle>.updated.txt`` / ``<cycle>.deleted.txt``.

    A cycle is picked up once both files exist; the high-water mark is the
    largest cycle id seen so far.
    """

    def __init__(self, directory: Path | str, start_after: int = -1) -> None:
        self.directory = Path(directory)
        self.high_water = start_after

    def poll(self) -> list[Changeset]:
        if not self.directory.is_dir():
            raise FeedUnavailable(f"changeset directory {self.directory} does not exist")
        out = []
        for cycle_id in complete_cycles(self.directory):
            if cycle_id <= self.high_water:
                continue
            out.append(read_changeset(self.directory, cycle_id))
            self.high_water = cycle_id
        return out
