"""Channelized pub-sub Service: channel tree, subscriptions, ordered fanout."""

from __future__ import annotations

import itertools
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Protocol

from pushsync.core.types import ChangeNotification, ChannelPath
from pushsync.errors import SinkClosed, SinkOverflow, UnknownChannel

logger = logging.getLogger(__name__)

DEFAULT_BUFFER_CAPACITY = 65_536


class Sink(Protocol):
    """Delivery endpoint. ``deliver`` must not block."""

    @property
    def closed(self) -> bool: ...

    def deliver(self, cn: ChangeNotification) -> None: ...

    def close(self) -> int:
        """Close the sink and return the number of undelivered CNs dropped."""
        ...


class CallbackSink:
    """Hands each CN straight to a callable (in-process transport)."""

    def __init__(self, callback: Callable[[ChangeNotification], object]) -> None:
        self._callback = callback
        self._closed = False

    @property
    def closed(self) -> bool:
        return self._closed

    def deliver(self, cn: ChangeNotification) -> None:
        if self._closed:
            raise SinkClosed("callback sink closed")
        self._callback(cn)

    def close(self) -> int:
        self._closed = True
        return 0


class QueueSink:
    """Bounded in-process outbound buffer; the consumer pulls with ``drain``."""

    def __init__(self, capacity: int = DEFAULT_BUFFER_CAPACITY) -> None:
        self.capacity = capacity
        self._buf: deque[ChangeNotification] = deque()
        self._lock = threading.Lock()
        self._closed = False

    @property
    def closed(self) -> bool:
        return self._closed

    def deliver(self, cn: ChangeNotification) -> None:
        with self._lock:
            if self._closed:
                raise SinkClosed("queue sink closed")
            if len(self._buf) >= self.capacity:
                raise SinkOverflow(f"outbound buffer full ({self.capacity})")
            self._buf.append(cn)

    def drain(self) -> list[ChangeNotification]:
        with self._lock:
            items = list(self._buf)
            self._buf.clear()
        return items

    def __len__(self) -> int:
        return len(self._buf)

    def close(self) -> int:
        with self._lock:
            self._closed = True
            dropped = len(self._buf)
            self._buf.clear()
        return dropped


@dataclass
class Subscription:
    id: str
    subscriber_id: str
    path: ChannelPath
    sink: Sink


@dataclass
class ChannelNode:
    path: ChannelPath
    children: dict[str, ChannelNode] = field(default_factory=dict)
    subscribers: dict[str, None] = field(default_factory=dict)  # ordered set of ids


@dataclass(frozen=True)
class DeliveryFailure:
    subscription_id: str
    subscriber_id: str
    seq: int
    reason: str


@dataclass(frozen=True)
class DeliveryReceipt:
    fanout_count: int
    failures: tuple[DeliveryFailure, ...] = ()


@dataclass
class BrokerCounters:
    published: int = 0
    delivered: int = 0
    dropped: int = 0
    # The broker never calls back into a Source; kept so runs can assert it.
    source_requests: int = 0


class Broker:
    """Channel tree plus subscriptions.

    ``publish`` delivers a CN once to every subscription on the target
    channel or any of its ancestors. All mutation and fanout happen under a
    single lock, which is the serialization point that fixes per-channel
    delivery order.
    """

    def __init__(self, buffer_capacity: int = DEFAULT_BUFFER_CAPACITY) -> None:
        self.buffer_capacity = buffer_capacity
        self._roots: dict[str, ChannelNode] = {}
        self._subs: dict[str, Subscription] = {}
        self._by_key: dict[tuple[str, ChannelPath], str] = {}
        self._ids = itertools.count(1)
        self._lock = threading.RLock()
        self.counters = BrokerCounters()
        self.failures: list[DeliveryFailure] = []

    # -- channels -----------------------------------------------------------

    def create_channel(self, path: ChannelPath) -> ChannelNode:
        with self._lock:
            head, *rest = path.segments
            node = self._roots.get(head)
            if node is None:
                node = self._roots[head] = ChannelNode(ChannelPath((head,)))
            for seg in rest:
                nxt = node.children.get(seg)
                if nxt is None:
                    nxt = node.children[seg] = ChannelNode(node.path.child(seg))
                node = nxt
            return node

    def channel(self, path: ChannelPath) -> ChannelNode | None:
        with self._lock:
            head, *rest = path.segments
            node = self._roots.get(head)
            for seg in rest:
                if node is None:
                    return None
                node = node.children.get(seg)
            return node

    def channels(self) -> list[ChannelPath]:
        out: list[ChannelPath] = []
        with self._lock:
            stack = list(self._roots.values())
            while stack:
                node = stack.pop()
                out.append(node.path)
                stack.extend(node.children.values())
        return sorted(out)

    # -- subscriptions ------------------------------------------------------

    def subscribe(self, subscriber_id: str, path: ChannelPath, sink: Sink) -> Subscription:
        if sink.closed:
            raise SinkClosed(f"sink for {subscriber_id} is already closed")
        with self._lock:
            existing = self._by_key.get((subscriber_id, path))
            if existing is not None:
                return self._subs[existing]
            node = self.create_channel(path)
            sub = Subscription(f"sub-{next(self._ids)}", subscriber_id, path, sink)
            self._subs[sub.id] = sub
            self._by_key[(subscriber_id, path)] = sub.id
            node.subscribers[sub.id] = None
            return sub

    def unsubscribe(self, subscription_id: str) -> bool:
        with self._lock:
            sub = self._subs.pop(subscription_id, None)
            if sub is None:
                return False
            del self._by_key[(sub.subscriber_id, sub.path)]
            node = self.channel(sub.path)
            if node is not None:
                node.subscribers.pop(subscription_id, None)
            return True

    def find_subscription(self, subscriber_id: str, path: ChannelPath) -> Subscription | None:
        with self._lock:
            sid = self._by_key.get((subscriber_id, path))
            return self._subs.get(sid) if sid else None

    def subscriptions(self) -> list[Subscription]:
        with self._lock:
            return list(self._subs.values())

    def disconnect(self, subscriber_id: str) -> int:
        """Drop every subscription of a subscriber and close their sinks.

        Returns the number of undelivered CNs dropped.
        """
        dropped = 0
        with self._lock:
            for sub in [s for s in self._subs.values() if s.subscriber_id == subscriber_id]:
                self.unsubscribe(sub.id)
                dropped += sub.sink.close()
            self.counters.dropped += dropped
        return dropped

    # -- publish ------------------------------------------------------------

    def matching(self, path: ChannelPath) -> list[Subscription]:
        """Subscriptions on ``path`` and on every ancestor of it."""
        with self._lock:
            out = []
            node = self._roots.get(path.segments[0])
            chain = [node]
            for seg in path.segments[1:]:
                node = node.children.get(seg) if node is not None else None
                chain.append(node)
            if chain[-1] is None:
                raise UnknownChannel(str(path))
            for n in chain:
                out.extend(self._subs[sid] for sid in n.subscribers)
            return out

    def publish(self, path: ChannelPath, cn: ChangeNotification) -> DeliveryReceipt:
        with self._lock:
            targets = self.matching(path)
            self.counters.published += 1
            failures = []
            delivered = 0
            for sub in targets:
                try:
                    sub.sink.deliver(cn)
                    delivered += 1
                except SinkClosed as exc:
                    failure = DeliveryFailure(sub.id, sub.subscriber_id, cn.seq, str(exc))
                    failures.append(failure)
                    self.failures.append(failure)
                    logger.warning("delivery to %s failed: %s", sub.subscriber_id, exc)
                    self.unsubscribe(sub.id)
                    # the CN that could not be handed over is lost too
                    self.counters.dropped += sub.sink.close() + 1
            self.counters.delivered += delivered
            return DeliveryReceipt(fanout_count=len(targets), failures=tuple(failures))
