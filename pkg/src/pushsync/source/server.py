"""Resource serving over TCP, using the broker's newline framing.

Request:   ``GET <uri>\\n``
Response:  ``RES <TAB> status <TAB> version <TAB> digest <TAB> length\\n`` followed
           by exactly ``length`` body bytes. ``status`` is one of ``ok``,
           ``not-found``, ``gone``, ``bad-request``; only ``ok`` carries a body.

The body is length-prefixed because canonical serializations are
themselves multi-line.
"""

from __future__ import annotations

import asyncio
import logging
import socket
import threading

from pushsync.core.types import ResourceVersion, digest_bytes
from pushsync.core.uri import normalize_uri
from pushsync.errors import FetchError, Gone, MalformedUri, NotFound
from pushsync.net import connect_with_retry
from pushsync.source.source import Source

logger = logging.getLogger(__name__)


def _header(status: str, version: int = 0, digest: str = "", length: int = 0) -> bytes:
    return f"RES\t{status}\t{version}\t{digest}\t{length}\n".encode("utf-8")


class SourceServer:
    def __init__(self, source: Source, host: str = "127.0.0.1", port: int = 0) -> None:
        self.source = source
        self.host = host
        self.port = port
        self._server: asyncio.base_events.Server | None = None
        self.requests = 0

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info("source serving on %s:%d", self.host, self.port)

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    def respond(self, line: bytes) -> bytes:
        self.requests += 1
        text = line.decode("utf-8", errors="replace").rstrip("\r\n")
        verb, _, arg = text.partition(" ")
        if verb != "GET" or not arg:
            return _header("bad-request")
        try:
            rv = self.source.get_representation(arg)
        except MalformedUri:
            return _header("bad-request")
        except NotFound:
            return _header("not-found")
        except Gone:
            return _header("gone")
        return _header("ok", rv.version, rv.digest, len(rv.body)) + rv.body

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                writer.write(self.respond(line))
                await writer.drain()
        except (ConnectionError, ValueError):
            pass
        finally:
            writer.close()


class SourceClient:
    """Blocking ``GET`` client with one persistent connection.

    Usable as the ``fetch`` callable of a Destination. Thread-safe: requests
    are serialized on the connection.
    """

    def __init__(self, host: str, port: int, connect_deadline_s: float = 10.0) -> None:
        self.host = host
        self.port = port
        self.connect_deadline_s = connect_deadline_s
        self._sock: socket.socket | None = None
        self._file = None
        self._lock = threading.Lock()

    def _ensure(self) -> None:
        if self._sock is None:
            self._sock = connect_with_retry(self.host, self.port, self.connect_deadline_s)
            self._file = self._sock.makefile("rb")

    def close(self) -> None:
        with self._lock:
            self._drop()

    def _drop(self) -> None:
        if self._sock is not None:
            try:
                self._file.close()
                self._sock.close()
            except OSError:
                pass
        self._sock = None
        self._file = None

    def __call__(self, uri: str) -> ResourceVersion:
        return self.get(uri)

    def get(self, uri: str) -> ResourceVersion:
        norm = normalize_uri(uri)
        with self._lock:
            try:
                self._ensure()
                self._sock.sendall(f"GET {norm}\n".encode("utf-8"))
                header = self._file.readline()
                if not header.endswith(b"\n"):
                    raise FetchError("connection closed mid-response")
                tag, status, version, digest, length = header.decode("utf-8").rstrip("\n").split("\t")
                body = self._file.read(int(length)) if int(length) else b""
                if len(body) != int(length):
                    raise FetchError("truncated body")
            except (OSError, ValueError) as exc:
                self._drop()
                raise FetchError(f"GET {norm} failed: {exc}") from exc
            except FetchError:
                self._drop()
                raise
        if tag != "RES":
            raise FetchError(f"unexpected response tag {tag!r}")
        if status == "not-found":
            raise NotFound(norm)
        if status == "gone":
            raise Gone(norm)
        if status != "ok":
            raise FetchError(f"source answered {status}")
        if digest_bytes(body) != digest:
            raise FetchError(f"digest mismatch for {norm}")
        return ResourceVersion(norm, int(version), body, created_at=0, digest=digest)
