"""Hypothesis strategies shared by the property tests."""

from __future__ import annotations

import string

from hypothesis import strategies as st

from pushsync.core.types import ChangeNotification, ChannelPath, EventKind, digest_bytes
from pushsync.core.uri import RESERVED, UNRESERVED

# reserved characters that are safe inside a path (no tab/newline/space issues)
_PATH_RESERVED = "".join(sorted(RESERVED - set("#?")))
_OTHER = "äéßøΩжあ€ 😀\"<>{}|^`"

URI_ALPHABET = sorted(UNRESERVED) + list(_PATH_RESERVED) + list(_OTHER)
uri_chars = st.sampled_from(URI_ALPHABET)


def _pct(ch: str, lower: bool) -> str:
    hx = "".join(f"%{b:02X}" for b in ch.encode("utf-8"))
    return hx.lower() if lower else hx


def canonical_char(ch: str) -> str:
    """Independent statement of the canonical spelling of one character."""
    if ch in UNRESERVED or ch in RESERVED:
        return ch
    return _pct(ch, lower=False)


@st.composite
def uri_spellings(draw):
    """(canonical, raw1, raw2): two independently drawn spellings of one URI."""
    scheme = draw(st.sampled_from(["http", "https", "urn", "ftp"]))
    chars = draw(st.lists(uri_chars, min_size=1, max_size=30))
    canonical = scheme + "://ex.org/" + "".join(canonical_char(c) for c in chars)

    def spell():
        out = []
        for c in chars:
            if c in RESERVED:
                out.append(c)
                continue
            how = draw(st.sampled_from(["literal", "upper", "lower"]))
            out.append(c if how == "literal" else _pct(c, lower=(how == "lower")))
        sch = "".join(
            ch.upper() if draw(st.booleans()) else ch for ch in scheme
        )
        return sch + "://ex.org/" + "".join(out)

    return canonical, spell(), spell()


segments = st.text(alphabet=string.ascii_lowercase + string.digits + "_-", min_size=1, max_size=8)
channel_paths = st.lists(segments, min_size=1, max_size=4).map(lambda s: ChannelPath(tuple(s)))


@st.composite
def notifications(draw):
    kind = draw(st.sampled_from(list(EventKind)))
    _, raw, _ = draw(uri_spellings())
    digest = "" if kind is EventKind.DELETE else digest_bytes(draw(st.binary(max_size=16)))
    return ChangeNotification(
        seq=draw(st.integers(min_value=0, max_value=2**63)),
        kind=kind,
        uri=raw,
        event_time=draw(st.integers(min_value=0, max_value=2**53)),
        channel=draw(channel_paths),
        digest=digest,
    )
