"""Shared domain types, URI normalization, channel algebra and encodings."""

from pushsync.core.changeset_io import complete_cycles, read_changeset, write_changeset
from pushsync.core.clock import Clock, VirtualClock, WallClock
from pushsync.core.codec import decode_cn, encode_cn
from pushsync.core.types import (
    ChangeNotification,
    Changeset,
    ChannelPath,
    EventKind,
    ResourceVersion,
    body_lines,
    canonical_body,
    digest_bytes,
    is_ancestor,
    parse_triple_line,
)
from pushsync.core.uri import NormalizedUri, normalize_uri

__all__ = [
    "ChangeNotification",
    "Changeset",
    "ChannelPath",
    "Clock",
    "EventKind",
    "NormalizedUri",
    "ResourceVersion",
    "VirtualClock",
    "WallClock",
    "body_lines",
    "canonical_body",
    "complete_cycles",
    "decode_cn",
    "digest_bytes",
    "encode_cn",
    "is_ancestor",
    "normalize_uri",
    "parse_triple_line",
    "read_changeset",
    "write_changeset",
]
