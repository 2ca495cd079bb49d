"""Small helpers shared by the TCP servers and clients."""

from __future__ import annotations

import socket
import time

from pushsync.errors import ConfigError


def parse_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"address must be host:port, got {addr!r}")
    return host or "127.0.0.1", int(port)


def connect_with_retry(
    host: str,
    port: int,
    deadline_s: float = 10.0,
    backoff_s: float = 0.05,
    max_backoff_s: float = 1.0,
) -> socket.socket:
    """Connect, retrying with exponential backoff until ``deadline_s`` elapses.

    Raises the last ``OSError`` once the deadline passes.
    """
    give_up = time.monotonic() + deadline_s
    delay = backoff_s
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=max(deadline_s, 1.0))
            sock.settimeout(None)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except OSError:
            if time.monotonic() + delay > give_up:
                raise
            time.sleep(delay)
            delay = min(delay * 2, max_backoff_s)
