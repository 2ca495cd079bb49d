"""Blocking client for the broker's TCP session protocol."""

from __future__ import annotations

import logging
import queue
import socket
import threading
from typing import Callable

from pushsync.core.codec import decode_cn, encode_cn
from pushsync.core.types import ChangeNotification, ChannelPath
from pushsync.errors import BrokerUnavailable, FrameError, UnknownChannel
from pushsync.net import connect_with_retry

logger = logging.getLogger(__name__)


class BrokerClient:
    """One TCP session with the broker.

    Works as a publisher (``create_channel`` / ``publish``, the same surface
    as the in-process :class:`Broker`) and as a subscriber: CN frames that
    arrive are decoded and handed to ``on_cn`` on the reader thread.
    """

    def __init__(
        self,
        host: str,
        port: int,
        on_cn: Callable[[ChangeNotification], object] | None = None,
        connect_deadline_s: float = 10.0,
        reply_timeout_s: float = 30.0,
    ) -> None:
        self.host = host
        self.port = port
        self.on_cn = on_cn
        self.connect_deadline_s = connect_deadline_s
        self.reply_timeout_s = reply_timeout_s
        self._sock: socket.socket | None = None
        self._replies: queue.Queue[str | None] = queue.Queue()
        self._send_lock = threading.Lock()
        self._reader: threading.Thread | None = None
        self.bad_frames = 0
        self.received = 0

    # -- connection ---------------------------------------------------------

    def connect(self) -> BrokerClient:
        try:
            self._sock = connect_with_retry(self.host, self.port, self.connect_deadline_s)
        except OSError as exc:
            raise BrokerUnavailable(f"cannot reach broker at {self.host}:{self.port}: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, name="broker-reader", daemon=True)
        self._reader.start()
        return self

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
        if self._reader is not None:
            self._reader.join(timeout=2.0)

    def __enter__(self) -> BrokerClient:
        return self.connect() if self._sock is None else self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def connected(self) -> bool:
        return self._reader is not None and self._reader.is_alive()

    def _read_loop(self) -> None:
        f = self._sock.makefile("rb")
        try:
            for line in f:
                if line.startswith(b"CN\t"):
                    try:
                        cn = decode_cn(line)
                    except FrameError:
                        self.bad_frames += 1
                        logger.warning("dropping undecodable frame %r", line[:80])
                        continue
                    self.received += 1
                    if self.on_cn is not None:
                        self.on_cn(cn)
                else:
                    self._replies.put(line.decode("utf-8", errors="replace").rstrip("\r\n"))
        except (OSError, ValueError):
            pass
        finally:
            self._replies.put(None)

    # -- requests -----------------------------------------------------------

    def _request(self, payload: bytes) -> str:
        if self._sock is None:
            raise BrokerUnavailable("not connected")
        with self._send_lock:
            try:
                self._sock.sendall(payload)
            except OSError as exc:
                raise BrokerUnavailable(f"send failed: {exc}") from exc
            try:
                reply = self._replies.get(timeout=self.reply_timeout_s)
            except queue.Empty as exc:
                raise BrokerUnavailable("broker did not answer") from exc
        if reply is None:
            self._replies.put(None)
            raise BrokerUnavailable("connection to broker lost")
        return reply

    def _ok(self, payload: bytes, channel: ChannelPath) -> None:
        reply = self._request(payload)
        if reply == "OK":
            return
        if reply == "ERR unknown-channel":
            raise UnknownChannel(str(channel))
        raise BrokerUnavailable(f"broker refused request: {reply}")

    def create_channel(self, path: ChannelPath) -> None:
        self._ok(f"CREATE {path}\n".encode("utf-8"), path)

    def subscribe(self, path: ChannelPath) -> None:
        self._ok(f"SUB {path}\n".encode("utf-8"), path)

    def unsubscribe(self, path: ChannelPath) -> bool:
        return self._request(f"UNSUB {path}\n".encode("utf-8")) == "OK"

    def publish(self, path: ChannelPath, cn: ChangeNotification) -> None:
        if path != cn.channel:
            raise ValueError("the CN frame carries its own channel; it must match path")
        self._ok(b"PUB\n" + encode_cn(cn), path)
