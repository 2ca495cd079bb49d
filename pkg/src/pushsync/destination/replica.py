"""Latest-only replica stores held by a Destination."""

from __future__ import annotations

import abc
import os
import threading
from pathlib import Path
from urllib.parse import quote, unquote

from pushsync.core.types import digest_bytes
from pushsync.core.uri import NormalizedUri


def _sorted_listing(rows):
    return sorted(rows, key=lambda r: r[0].encode("utf-8"))


class ReplicaStore(abc.ABC):
    """One body per URI, no history."""

    @abc.abstractmethod
    def get_digest(self, uri: NormalizedUri) -> str | None: ...

    @abc.abstractmethod
    def get_body(self, uri: NormalizedUri) -> bytes | None: ...

    @abc.abstractmethod
    def put(self, uri: NormalizedUri, body: bytes) -> None: ...

    @abc.abstractmethod
    def delete(self, uri: NormalizedUri) -> bool: ...

    @abc.abstractmethod
    def uris(self) -> list[NormalizedUri]: ...

    def listing(self) -> list[tuple[NormalizedUri, str]]:
        """(uri, digest) for every stored resource, sorted by URI bytes."""
        return _sorted_listing((u, self.get_digest(u)) for u in self.uris())

    def __len__(self) -> int:
        return len(self.uris())

    def __contains__(self, uri: str) -> bool:
        return self.get_digest(NormalizedUri(uri)) is not None


class MemoryReplicaStore(ReplicaStore):
    """Keyed in-memory map (stand-in for a triple-store backed Destination)."""

    def __init__(self) -> None:
        self._data: dict[NormalizedUri, tuple[bytes, str]] = {}

    def get_digest(self, uri):
        entry = self._data.get(uri)
        return entry[1] if entry else None

    def get_body(self, uri):
        entry = self._data.get(uri)
        return entry[0] if entry else None

    def put(self, uri, body):
        self._data[uri] = (body, digest_bytes(body))

    def delete(self, uri):
        return self._data.pop(uri, None) is not None

    def uris(self):
        return list(self._data)

    def __len__(self):
        return len(self._data)


def uri_to_filename(uri: str) -> str:
    return quote(uri, safe="")


def filename_to_uri(name: str) -> NormalizedUri:
    return NormalizedUri(unquote(name))


class FileReplicaStore(ReplicaStore):
    """One file per resource at ``<root>/<percent-encoded-uri>``.

    File contents are exactly the canonical serialization, so two stores
    can be compared with any recursive file diff. Digests are cached in
    memory and rebuilt from disk on startup.
    """

    _TMP_SUFFIX = ".part"

    def __init__(self, root: Path | str) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._digests: dict[NormalizedUri, str] = {}
        for entry in os.scandir(self.root):
            if entry.is_file() and not entry.name.endswith(self._TMP_SUFFIX):
                with open(entry.path, "rb") as f:
                    self._digests[filename_to_uri(entry.name)] = digest_bytes(f.read())

    def path_for(self, uri: str) -> Path:
        return self.root / uri_to_filename(uri)

    def get_digest(self, uri):
        return self._digests.get(uri)

    def get_body(self, uri):
        if uri not in self._digests:
            return None
        return self.path_for(uri).read_bytes()

    def put(self, uri, body):
        path = self.path_for(uri)
        tmp = path.with_name(path.name + self._TMP_SUFFIX)
        tmp.write_bytes(body)
        os.replace(tmp, path)
        with self._lock:
            self._digests[uri] = digest_bytes(body)

    def delete(self, uri):
        with self._lock:
            present = self._digests.pop(uri, None) is not None
        try:
            self.path_for(uri).unlink()
        except FileNotFoundError:
            pass
        return present

    def uris(self):
        with self._lock:
            return list(self._digests)

    def __len__(self):
        return len(self._digests)
