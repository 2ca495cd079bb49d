"""Immutable domain values: channels, change notifications, versions, changesets."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Iterable

from pushsync.core.uri import NormalizedUri, normalize_uri
from pushsync.errors import MalformedUri

CHANNEL_SEPARATOR = "/"


def digest_bytes(body: bytes) -> str:
    """SHA-256 of ``body``, lowercase hex. The only digest used anywhere."""
    return hashlib.sha256(body).hexdigest()


class EventKind(str, enum.Enum):
    CREATE = "create"
    UPDATE = "update"
    DELETE = "delete"


@dataclass(frozen=True, order=True)
class ChannelPath:
    """Hierarchical channel name, e.g. ``dbpedia/music``.

    A subscriber on a path also receives everything published on its
    descendants.
    """

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("channel path needs at least one segment")
        for s in segs:
            if not isinstance(s, str) or not s:
                raise ValueError(f"empty or non-string channel segment in {segs!r}")
            if CHANNEL_SEPARATOR in s or any(ch.isspace() for ch in s):
                raise ValueError(f"illegal character in channel segment {s!r}")

    @classmethod
    def parse(cls, text: str) -> ChannelPath:
        return cls(tuple(text.split(CHANNEL_SEPARATOR)))

    @classmethod
    def of(cls, *segments: str) -> ChannelPath:
        return cls(tuple(segments))

    def __str__(self) -> str:
        return CHANNEL_SEPARATOR.join(self.segments)

    @property
    def depth(self) -> int:
        return len(self.segments)

    @property
    def parent(self) -> ChannelPath | None:
        if len(self.segments) == 1:
            return None
        return ChannelPath(self.segments[:-1])

    def child(self, segment: str) -> ChannelPath:
        return ChannelPath(self.segments + (segment,))

    def lineage(self) -> list[ChannelPath]:
        """This path followed by all of its ancestors, nearest first."""
        return [ChannelPath(self.segments[:i]) for i in range(len(self.segments), 0, -1)]

    def is_ancestor_of(self, other: ChannelPath) -> bool:
        return is_ancestor(self, other)


def is_ancestor(a: ChannelPath, b: ChannelPath) -> bool:
    """True iff ``a`` is a strict prefix of ``b``."""
    return len(a.segments) < len(b.segments) and b.segments[: len(a.segments)] == a.segments


@dataclass(frozen=True)
class ChangeNotification:
    seq: int
    kind: EventKind
    uri: NormalizedUri
    event_time: int
    channel: ChannelPath
    digest: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EventKind(self.kind))
        object.__setattr__(self, "uri", normalize_uri(self.uri))
        if self.seq < 0 or self.event_time < 0:
            raise ValueError("seq and event_time must be non-negative")
        if self.kind is EventKind.DELETE:
            if self.digest:
                raise ValueError("delete notifications carry no digest")
        elif not self.digest:
            raise ValueError(f"{self.kind.value} notification needs a digest")


@dataclass(frozen=True)
class ResourceVersion:
    uri: NormalizedUri
    version: int
    body: bytes
    created_at: int
    digest: str = field(default="")

    def __post_init__(self) -> None:
        if self.version < 1:
            raise ValueError("versions start at 1")
        actual = digest_bytes(self.body)
        if self.digest and self.digest != actual:
            raise ValueError(f"digest mismatch for {self.uri} v{self.version}")
        object.__setattr__(self, "digest", actual)


@dataclass(frozen=True)
class Changeset:
    """One update cycle: lines added ("updated") and lines removed ("deleted").

    ``categories`` holds ``(raw_uri, channel_path_text)`` pairs from the
    optional side file.
    """

    cycle_id: int
    updated_lines: tuple[str, ...] = ()
    deleted_lines: tuple[str, ...] = ()
    categories: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "updated_lines", tuple(self.updated_lines))
        object.__setattr__(self, "deleted_lines", tuple(self.deleted_lines))
        object.__setattr__(self, "categories", tuple(tuple(c) for c in self.categories))

    def size_bytes(self) -> int:
        """Bytes of the updated + deleted files as written to disk."""
        return sum(len(line.encode("utf-8")) + 1 for line in self.updated_lines) + sum(
            len(line.encode("utf-8")) + 1 for line in self.deleted_lines
        )


def parse_triple_line(line: str) -> tuple[NormalizedUri, str]:
    """Split ``<subject> <predicate> <object>`` into (subject, canonical line).

    The canonical line rewrites the subject into normalized form and keeps
    the remainder verbatim, so the same triple spelled two ways compares
    equal.
    """
    text = line.rstrip("\r\n")
    parts = text.split(None, 1)
    if len(parts) != 2 or len(parts[1].split(None, 1)) != 2:
        raise MalformedUri(f"not a triple line: {line!r}")
    subject = parts[0]
    if subject.startswith("<") and subject.endswith(">"):
        subject = subject[1:-1]
    uri = normalize_uri(subject)
    if "\t" in parts[1] or "\n" in parts[1]:
        raise MalformedUri(f"control character in triple: {line!r}")
    return uri, f"<{uri}> {parts[1]}"


def canonical_body(lines: Iterable[str]) -> bytes:
    """Sorted, de-duplicated, newline-joined lines with a trailing newline."""
    unique = sorted(set(lines))
    if not unique:
        return b""
    return ("\n".join(unique) + "\n").encode("utf-8")


def body_lines(body: bytes) -> list[str]:
    return body.decode("utf-8").splitlines()
