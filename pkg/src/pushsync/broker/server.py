"""TCP front end for :class:`~pushsync.broker.core.Broker`.

Session protocol, newline-framed UTF-8:

    client -> broker   SUB <channel> | UNSUB <channel> | CREATE <channel> | PUB
                       (PUB is followed by exactly one CN frame line)
    broker -> client   OK | ERR <code> | CN frames for subscribed channels

Responses come back in request order. CN frames may interleave with them
but never split a line, because each connection has a single writer task.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
import threading
from collections import deque

from pushsync.broker.core import DEFAULT_BUFFER_CAPACITY, Broker
from pushsync.core.codec import decode_cn, encode_cn
from pushsync.core.types import ChangeNotification, ChannelPath
from pushsync.errors import FrameError, SinkClosed, SinkOverflow, UnknownChannel

logger = logging.getLogger(__name__)

MAX_LINE = 1 << 20


class StreamSink:
    """Per-connection outbound buffer drained by one writer task.

    Only CN frames count against ``capacity``; control responses are never
    dropped.
    """

    def __init__(self, writer: asyncio.StreamWriter, loop: asyncio.AbstractEventLoop,
                 capacity: int = DEFAULT_BUFFER_CAPACITY) -> None:
        self._writer = writer
        self._loop = loop
        self.capacity = capacity
        self._out: deque[tuple[bool, bytes]] = deque()
        self._pending_cns = 0
        self._lock = threading.Lock()
        self._wake = asyncio.Event()
        self._closed = False
        self.task = loop.create_task(self._pump())

    @property
    def closed(self) -> bool:
        return self._closed

    def _push(self, is_cn: bool, data: bytes) -> None:
        self._out.append((is_cn, data))
        self._loop.call_soon_threadsafe(self._wake.set)

    def deliver(self, cn: ChangeNotification) -> None:
        with self._lock:
            if self._closed:
                raise SinkClosed("connection closed")
            if self._pending_cns >= self.capacity:
                self._loop.call_soon_threadsafe(self._writer.close)
                raise SinkOverflow(f"outbound buffer full ({self.capacity})")
            self._pending_cns += 1
            self._push(True, encode_cn(cn))

    def reply(self, line: str) -> None:
        with self._lock:
            if not self._closed:
                self._push(False, line.encode("utf-8") + b"\n")

    def close(self) -> int:
        with self._lock:
            if self._closed:
                return 0
            self._closed = True
            dropped = self._pending_cns
            self._pending_cns = 0
            self._out.clear()
        self._loop.call_soon_threadsafe(self._wake.set)
        return dropped

    async def _pump(self) -> None:
        try:
            while True:
                await self._wake.wait()
                self._wake.clear()
                with self._lock:
                    batch = list(self._out)
                    self._out.clear()
                    self._pending_cns -= sum(1 for is_cn, _ in batch if is_cn)
                    closed = self._closed
                if batch:
                    self._writer.write(b"".join(data for _, data in batch))
                    await self._writer.drain()
                if closed:
                    return
        except (ConnectionError, OSError):
            with self._lock:
                self._closed = True


class BrokerServer:
    def __init__(self, broker: Broker, host: str = "127.0.0.1", port: int = 0) -> None:
        self.broker = broker
        self.host = host
        self.port = port
        self._server: asyncio.base_events.Server | None = None
        self._conn_ids = itertools.count(1)

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._handle, self.host, self.port, limit=MAX_LINE
        )
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info("broker listening on %s:%d", self.host, self.port)

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn_id = f"conn-{next(self._conn_ids)}"
        sink = StreamSink(writer, asyncio.get_running_loop(), self.broker.buffer_capacity)
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                if not line.endswith(b"\n"):
                    sink.reply("ERR truncated")
                    break
                await self._command(conn_id, line, reader, sink)
        except (ConnectionError, asyncio.IncompleteReadError, asyncio.LimitOverrunError, ValueError):
            pass
        finally:
            dropped = self.broker.disconnect(conn_id)
            dropped += sink.close()
            if dropped:
                logger.info("%s disconnected, %d undelivered CNs dropped", conn_id, dropped)
            try:
                await asyncio.wait_for(sink.task, timeout=1.0)
            except (asyncio.TimeoutError, Exception):
                pass
            writer.close()

    async def _command(self, conn_id: str, line: bytes, reader: asyncio.StreamReader,
                       sink: StreamSink) -> None:
        text = line.decode("utf-8", errors="replace").rstrip("\r\n")
        verb, _, arg = text.partition(" ")

        if verb == "PUB":
            frame = await reader.readline()
            try:
                cn = decode_cn(frame)
                self.broker.publish(cn.channel, cn)
            except FrameError:
                sink.reply("ERR bad-frame")
                return
            except UnknownChannel:
                sink.reply("ERR unknown-channel")
                return
            sink.reply("OK")
            return

        if verb not in ("SUB", "UNSUB", "CREATE"):
            sink.reply("ERR unknown-command")
            return
        try:
            path = ChannelPath.parse(arg)
        except ValueError:
            sink.reply("ERR bad-channel")
            return

        if verb == "CREATE":
            self.broker.create_channel(path)
            sink.reply("OK")
        elif verb == "SUB":
            try:
                self.broker.subscribe(conn_id, path, sink)
            except SinkClosed:
                return
            sink.reply("OK")
        else:
            sub = self.broker.find_subscription(conn_id, path)
            if sub is None:
                sink.reply("ERR not-subscribed")
            else:
                self.broker.unsubscribe(sub.id)
                sink.reply("OK")
