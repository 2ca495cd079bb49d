"""Percent-encoding normalization for resource URIs.

A URI can reach the system spelled in several ways: ``caf%C3%A9`` and
``café`` name the same resource, as do ``%7E`` and ``~``. Every component
keys its stores on the normalized form, so two spellings can never end up
as two different resources.

Rules applied to everything after the scheme:

* ``%XX`` whose byte is an unreserved ASCII character is decoded.
* Any other ``%XX`` is kept, with hex digits uppercased.
* Literal reserved and unreserved characters are kept as-is.
* Every other literal character (non-ASCII, space, controls, ...) is
  UTF-8 encoded and percent-encoded.

The scheme is lowercased. Nothing else about the URI is touched.
"""

from __future__ import annotations

import functools
import re
import string

from pushsync.errors import MalformedUri

UNRESERVED = frozenset(string.ascii_letters + string.digits + "-._~")
RESERVED = frozenset(":/?#[]@!$&'()*+,;=")
_HEXDIGITS = frozenset(string.hexdigits)
_SCHEME_RE = re.compile(r"[A-Za-z][A-Za-z0-9+.\-]*:")


class NormalizedUri(str):
    """A URI string already in canonical percent-encoded form.

    Only :func:`normalize_uri` should construct these.
    """

    __slots__ = ()


def normalize_uri(raw: str) -> NormalizedUri:
    """Return the canonical spelling of ``raw``.

    Raises:
        MalformedUri: no scheme, empty remainder, a broken ``%`` escape,
            or characters that cannot be UTF-8 encoded.
    """
    if isinstance(raw, NormalizedUri):
        return raw
    if not isinstance(raw, str):
        raise MalformedUri(f"not a string: {raw!r}")
    return _normalize(str(raw))


# the same few thousand subjects recur on every line of a resource
@functools.lru_cache(maxsize=1 << 16)
def _normalize(raw: str) -> NormalizedUri:
    m = _SCHEME_RE.match(raw)
    if m is None:
        raise MalformedUri(f"no scheme: {raw!r}")
    rest = raw[m.end():]
    if not rest:
        raise MalformedUri(f"nothing after scheme: {raw!r}")

    out = [m.group().lower()]
    i = 0
    n = len(rest)
    while i < n:
        c = rest[i]
        if c == "%":
            hx = rest[i + 1:i + 3]
            if len(hx) != 2 or not _HEXDIGITS.issuperset(hx):
                raise MalformedUri(f"bad percent escape at offset {i}: {raw!r}")
            ch = chr(int(hx, 16))
            out.append(ch if ch in UNRESERVED else "%" + hx.upper())
            i += 3
            continue
        if c in UNRESERVED or c in RESERVED:
            out.append(c)
        else:
            try:
                encoded = c.encode("utf-8")
            except UnicodeEncodeError as exc:
                raise MalformedUri(f"unencodable character in {raw!r}") from exc
            out.extend(f"%{b:02X}" for b in encoded)
        i += 1
    return NormalizedUri("".join(out))


def is_normalized(value: str) -> bool:
    try:
        return normalize_uri(str(value)) == value
    except MalformedUri:
        return False
