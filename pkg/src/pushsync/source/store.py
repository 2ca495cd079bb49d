"""Versioned canonical store kept by the Source."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from pushsync.core.types import ChannelPath, ResourceVersion, body_lines
from pushsync.core.uri import NormalizedUri
from pushsync.errors import Gone, NotFound


@dataclass
class History:
    versions: list[ResourceVersion] = field(default_factory=list)
    deleted: bool = False

    @property
    def latest(self) -> ResourceVersion | None:
        if self.deleted or not self.versions:
            return None
        return self.versions[-1]


class CanonicalStore:
    """All versions of every resource, plus the category assignment.

    Version lists are append-only and contiguous. A delete leaves the
    history in place and marks the latest state as a tombstone.
    """

    def __init__(self) -> None:
        self._histories: dict[NormalizedUri, History] = {}
        self.categories: dict[NormalizedUri, list[ChannelPath]] = {}
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._histories)

    def __contains__(self, uri: str) -> bool:
        return uri in self._histories

    def history(self, uri: NormalizedUri) -> History | None:
        return self._histories.get(uri)

    def uris(self) -> list[NormalizedUri]:
        with self._lock:
            return list(self._histories)

    def latest(self, uri: NormalizedUri) -> ResourceVersion | None:
        h = self._histories.get(uri)
        return h.latest if h is not None else None

    def is_live(self, uri: NormalizedUri) -> bool:
        return self.latest(uri) is not None

    def current_lines(self, uri: NormalizedUri) -> set[str]:
        latest = self.latest(uri)
        return set(body_lines(latest.body)) if latest is not None else set()

    def get(self, uri: NormalizedUri) -> ResourceVersion:
        with self._lock:
            h = self._histories.get(uri)
            if h is None:
                raise NotFound(uri)
            if h.latest is None:
                raise Gone(uri)
            return h.versions[-1]

    def append_version(self, uri: NormalizedUri, body: bytes, created_at: int) -> tuple[int, int]:
        """Store ``body`` as the next version. Returns (old_version, new_version);
        old_version is 0 if the resource was absent or tombstoned."""
        with self._lock:
            h = self._histories.setdefault(uri, History())
            old = 0 if h.deleted or not h.versions else h.versions[-1].version
            new = len(h.versions) + 1
            h.versions.append(ResourceVersion(uri, new, body, created_at))
            h.deleted = False
            return old, new

    def tombstone(self, uri: NormalizedUri) -> int:
        """Mark ``uri`` deleted. Returns the version that was live (0 if none)."""
        with self._lock:
            h = self._histories.get(uri)
            if h is None or h.latest is None:
                return 0
            h.deleted = True
            return h.versions[-1].version

    def assign_category(self, uri: NormalizedUri, channel: ChannelPath) -> None:
        with self._lock:
            chans = self.categories.setdefault(uri, [])
            if channel not in chans:
                chans.append(channel)

    def live_listing(self) -> list[tuple[NormalizedUri, str]]:
        """(uri, digest) of every non-tombstoned resource, sorted by URI bytes."""
        with self._lock:
            rows = [(u, h.versions[-1].digest) for u, h in self._histories.items() if h.latest]
        return sorted(rows, key=lambda r: r[0].encode("utf-8"))

    def dump(self) -> bytes:
        """Byte serialization of the whole store, used for replay-determinism checks."""
        out = []
        with self._lock:
            for uri in sorted(self._histories, key=lambda u: u.encode("utf-8")):
                h = self._histories[uri]
                out.append(f"{uri}\t{'deleted' if h.deleted else 'live'}\t{len(h.versions)}\n".encode())
                for v in h.versions:
                    out.append(f"{v.version}\t{v.digest}\t{v.created_at}\n".encode())
                    out.append(v.body)
                cats = self.categories.get(uri, [])
                out.append(("\t".join(str(c) for c in cats) + "\n").encode())
        return b"".join(out)
