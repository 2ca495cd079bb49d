"""Bit-exact wire frame for change notifications.

One frame is one UTF-8 line::

    CN <TAB> seq <TAB> event_time_ms <TAB> kind <TAB> channel <TAB> uri <TAB> digest <LF>

Normalized URIs never contain tabs or newlines, and channel segments
cannot contain whitespace, so no escaping is needed.
"""

from __future__ import annotations

import re

from pushsync.core.types import ChangeNotification, ChannelPath, EventKind
from pushsync.core.uri import NormalizedUri, normalize_uri
from pushsync.errors import FrameError, MalformedUri

FRAME_TAG = "CN"
FIELD_COUNT = 6  # after the tag

_UINT_RE = re.compile(r"(0|[1-9][0-9]*)\Z")
_DIGEST_RE = re.compile(r"[0-9a-f]{64}\Z")
_KINDS = {k.value: k for k in EventKind}


def encode_cn(cn: ChangeNotification) -> bytes:
    return (
        f"{FRAME_TAG}\t{cn.seq}\t{cn.event_time}\t{cn.kind.value}\t"
        f"{cn.channel}\t{cn.uri}\t{cn.digest}\n"
    ).encode("utf-8")


def decode_cn(frame: bytes) -> ChangeNotification:
    """Parse exactly one newline-terminated frame.

    Raises:
        FrameError: on any deviation from the frame grammar.
    """
    if not isinstance(frame, (bytes, bytearray)):
        raise FrameError("frame must be bytes")
    if not frame.endswith(b"\n"):
        raise FrameError("truncated frame: missing line terminator")
    try:
        text = bytes(frame[:-1]).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FrameError("frame is not valid UTF-8") from exc
    if "\n" in text or "\r" in text:
        raise FrameError("frame contains an embedded line break")

    fields = text.split("\t")
    if fields[0] != FRAME_TAG:
        raise FrameError(f"unexpected frame tag {fields[0]!r}")
    if len(fields) - 1 != FIELD_COUNT:
        raise FrameError(f"expected {FIELD_COUNT} fields, got {len(fields) - 1}")
    seq_s, time_s, kind_s, channel_s, uri_s, digest = fields[1:]

    if not _UINT_RE.match(seq_s) or not _UINT_RE.match(time_s):
        raise FrameError("seq and event_time must be unsigned decimal integers")
    kind = _KINDS.get(kind_s)
    if kind is None:
        raise FrameError(f"unknown event kind {kind_s!r}")
    try:
        channel = ChannelPath.parse(channel_s)
    except ValueError as exc:
        raise FrameError(f"bad channel {channel_s!r}") from exc
    try:
        uri = normalize_uri(uri_s)
    except MalformedUri as exc:
        raise FrameError(f"bad uri {uri_s!r}") from exc
    if uri != uri_s:
        raise FrameError(f"uri not in normalized form: {uri_s!r}")
    if kind is EventKind.DELETE:
        if digest:
            raise FrameError("delete frame must have an empty digest")
    elif not _DIGEST_RE.match(digest):
        raise FrameError("digest must be 64 lowercase hex characters")

    return ChangeNotification(
        seq=int(seq_s),
        kind=kind,
        uri=NormalizedUri(uri),
        event_time=int(time_s),
        channel=channel,
        digest=digest,
    )
