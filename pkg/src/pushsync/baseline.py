"""Simulated push: Source ping -> Hub feed fetch -> Hub callback push -> Destination pull.

This is the feed-and-hub architecture the real-push path is measured
against. It reuses the real Source and Destination so that the only thing
that differs between the two runs is how change notifications travel:

    simulated push   ping (1.1), feed_fetch (1.2), callback_push (1.3), resource_pull (1.4)
    real push        cn_publish (2.1), cn_deliver (2.2), resource_pull (2.3)

Feed entries are change notifications; each one costs its wire frame plus a
fixed envelope overhead standing in for an Atom entry.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from pushsync.broker.core import Broker, CallbackSink
from pushsync.core.clock import VirtualClock
from pushsync.core.codec import encode_cn
from pushsync.core.types import ChangeNotification, Changeset, ChannelPath
from pushsync.destination.destination import Destination
from pushsync.destination.replica import MemoryReplicaStore
from pushsync.errors import FeedUnavailable, HubUnavailable
from pushsync.source.source import ChangeEvent, Source

logger = logging.getLogger(__name__)

DEFAULT_ENVELOPE_BYTES = 600

PING = "ping"
FEED_FETCH = "feed_fetch"
FEED_ENTRY = "feed_entry"
CALLBACK_PUSH = "callback_push"
RESOURCE_PULL = "resource_pull"
CN_PUBLISH = "cn_publish"
CN_DELIVER = "cn_deliver"

SIMULATED = "simulated_push"
REAL = "real_push"

# Source->Service and Service->Destination legs, paired across architectures.
CN_SIDE = {
    SIMULATED: (PING, FEED_FETCH, FEED_ENTRY, CALLBACK_PUSH),
    REAL: (CN_PUBLISH, CN_DELIVER),
}


class InteractionLedger:
    """Monotone interaction and byte counters, keyed by interaction class."""

    def __init__(self) -> None:
        self.counts: Counter[str] = Counter()
        self.bytes: Counter[str] = Counter()

    def add(self, cls: str, count: int = 1, nbytes: int = 0) -> None:
        if count < 0 or nbytes < 0:
            raise ValueError("ledger counters only grow")
        self.counts[cls] += count
        self.bytes[cls] += nbytes

    def snapshot(self) -> dict[str, tuple[int, int]]:
        keys = sorted(set(self.counts) | set(self.bytes))
        return {k: (self.counts[k], self.bytes[k]) for k in keys}

    def delta(self, before: Mapping[str, tuple[int, int]]) -> dict[str, tuple[int, int]]:
        now = self.snapshot()
        out = {}
        for k, (c, b) in now.items():
            c0, b0 = before.get(k, (0, 0))
            if c != c0 or b != b0:
                out[k] = (c - c0, b - b0)
        return out

    def cn_side_total(self, arch: str) -> int:
        return sum(self.counts[c] for c in CN_SIDE[arch])


def entry_bytes(cn: ChangeNotification, envelope: int = DEFAULT_ENVELOPE_BYTES) -> int:
    return len(encode_cn(cn)) + envelope


@dataclass
class Feed:
    """Append-only CN feed kept by the Source; ``high_water`` is the Hub's cursor."""

    window: int | None = None
    entries: list[ChangeNotification] = field(default_factory=list)
    high_water: int = 0
    available: bool = True

    def append(self, cn: ChangeNotification) -> None:
        self.entries.append(cn)

    def visible_start(self) -> int:
        if self.window is None:
            return 0
        return max(0, len(self.entries) - self.window)

    def __len__(self) -> int:
        return len(self.entries)


class FeedPublisher:
    """Lets the real :class:`Source` publish into per-channel feeds."""

    def __init__(self, window: int | None = None) -> None:
        self.window = window
        self.feeds: dict[ChannelPath, Feed] = {}
        self._touched: dict[ChannelPath, None] = {}

    def create_channel(self, path: ChannelPath) -> Feed:
        return self.feeds.setdefault(path, Feed(window=self.window))

    def publish(self, path: ChannelPath, cn: ChangeNotification) -> None:
        self.create_channel(path).append(cn)
        self._touched[path] = None

    def take_touched(self) -> list[ChannelPath]:
        out = list(self._touched)
        self._touched.clear()
        return out


class Hub:
    """Keeps one callback list per feed and relays new entries on each ping."""

    def __init__(
        self,
        feeds: FeedPublisher,
        ledger: InteractionLedger,
        envelope_bytes: int = DEFAULT_ENVELOPE_BYTES,
    ) -> None:
        self.feeds = feeds
        self.ledger = ledger
        self.envelope_bytes = envelope_bytes
        self.available = True
        self.callbacks: dict[ChannelPath, list[tuple[str, Callable[[ChangeNotification], object]]]] = {}
        self.missed_entries = 0
        self.callback_failures = 0
        self.fetch_bytes_history: list[int] = []

    def register_callback(self, destination_id: str, channel: ChannelPath,
                          callback: Callable[[ChangeNotification], object]) -> None:
        self.callbacks.setdefault(channel, []).append((destination_id, callback))

    def on_ping(self, channel: ChannelPath) -> list[ChangeNotification]:
        """Fetch the feed and return the entries above the high-water mark.

        The whole visible feed is transferred and charged, not just the new
        tail: without special-purpose optimizations the Hub re-reads entries
        it has already seen.
        """
        feed = self.feeds.feeds.get(channel)
        if feed is None or not feed.available:
            raise FeedUnavailable(f"no feed for {channel}")
        start = feed.visible_start()
        visible = feed.entries[start:]
        nbytes = sum(entry_bytes(cn, self.envelope_bytes) for cn in visible)
        self.ledger.add(FEED_FETCH, 1, nbytes)
        self.fetch_bytes_history.append(nbytes)
        if start > feed.high_water:
            self.missed_entries += start - feed.high_water
        new = feed.entries[max(start, feed.high_water):]
        feed.high_water = len(feed.entries)
        self.ledger.add(FEED_ENTRY, len(new), sum(len(encode_cn(cn)) for cn in new))
        return new

    def push_to_callbacks(self, channel: ChannelPath, new_entries: Sequence[ChangeNotification]) -> int:
        pushed = 0
        for dest_id, callback in self.callbacks.get(channel, []):
            for cn in new_entries:
                try:
                    callback(cn)
                except Exception as exc:
                    self.callback_failures += 1
                    logger.warning("callback to %s failed: %s", dest_id, exc)
                    continue
                self.ledger.add(CALLBACK_PUSH, 1, entry_bytes(cn, self.envelope_bytes))
                pushed += 1
        return pushed


class SimulatedPushSource:
    """A Source whose CNs go into feeds, followed by one content-less ping per
    updated feed."""

    def __init__(self, source: Source, hub: Hub) -> None:
        self.source = source
        self.hub = hub
        self.ping_failures = 0

    @property
    def ledger(self) -> InteractionLedger:
        return self.hub.ledger

    def source_update_and_ping(self, events: Iterable[ChangeEvent]) -> dict[str, tuple[int, int]]:
        before = self.ledger.snapshot()
        events = list(events)
        if not events:
            return {}
        self.source.publish_events(events, self.hub.feeds)
        for channel in self.hub.feeds.take_touched():
            try:
                self._ping(channel)
            except (HubUnavailable, FeedUnavailable) as exc:
                self.ping_failures += 1
                logger.warning("ping for %s failed: %s", channel, exc)
        return self.ledger.delta(before)

    def _ping(self, channel: ChannelPath) -> None:
        if not self.hub.available:
            raise HubUnavailable("hub is down")
        self.ledger.add(PING, 1, 0)
        new = self.hub.on_ping(channel)
        self.hub.push_to_callbacks(channel, new)

    def run_cycle(self, cs: Changeset) -> dict[str, tuple[int, int]]:
        self.source.assign_categories(cs.categories)
        events = self.source.ingest_changeset(cs)
        self.source.apply_events(events)
        return self.source_update_and_ping(events)


class CountingPublisher:
    """Wraps a :class:`Broker` and records 2.1/2.2 interactions."""

    def __init__(self, broker: Broker, ledger: InteractionLedger) -> None:
        self.broker = broker
        self.ledger = ledger

    def create_channel(self, path: ChannelPath):
        return self.broker.create_channel(path)

    def publish(self, path: ChannelPath, cn: ChangeNotification):
        receipt = self.broker.publish(path, cn)
        size = len(encode_cn(cn))
        self.ledger.add(CN_PUBLISH, 1, size)
        delivered = receipt.fanout_count - len(receipt.failures)
        self.ledger.add(CN_DELIVER, delivered, size * delivered)
        return receipt


def counting_fetch(source: Source, ledger: InteractionLedger):
    def fetch(uri: str):
        rv = source.get_representation(uri)
        ledger.add(RESOURCE_PULL, 1, len(rv.body))
        return rv

    return fetch


@dataclass
class ComparisonReport:
    cycles: int
    active_cycles: int
    destinations: int
    events: int
    ledgers: dict[str, dict[str, tuple[int, int]]]
    replicas_identical: bool
    replicas_match_source: bool
    fetch_bytes_history: list[int]
    missed_entries: int = 0

    def count(self, arch: str, cls: str) -> int:
        return self.ledgers[arch].get(cls, (0, 0))[0]

    def cn_side_total(self, arch: str) -> int:
        return sum(self.count(arch, c) for c in CN_SIDE[arch])

    def rows(self) -> list[tuple[str, str, int, int]]:
        out = []
        for arch in (REAL, SIMULATED):
            for cls, (count, nbytes) in sorted(self.ledgers[arch].items()):
                out.append((cls, arch, count, nbytes))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "arch", "count", "bytes"])
        w.writerows(self.rows())
        return buf.getvalue()


def compare_architectures(
    changesets: Sequence[Changeset],
    destinations: int = 2,
    baseline: Mapping[str, Iterable[str]] | None = None,
    window: int | None = None,
    envelope_bytes: int = DEFAULT_ENVELOPE_BYTES,
    cycle_ms: int = 30_000,
) -> ComparisonReport:
    """Run the same changesets through real push and simulated push.

    Destinations drain completely after every cycle in both runs, so the
    counts reflect interaction structure rather than timing.
    """
    baseline = {k: list(v) for k, v in (baseline or {}).items()}
    ledgers: dict[str, InteractionLedger] = {}
    listings: dict[str, list] = {}
    source_listing = None
    active = 0
    events_total = 0
    fetch_history: list[int] = []
    missed = 0

    for arch in (REAL, SIMULATED):
        clock = VirtualClock()
        ledger = InteractionLedger()
        source = Source(clock=clock)
        source.load_baseline(baseline)
        fetch = counting_fetch(source, ledger)
        dests = [
            Destination(f"dest-{i}", MemoryReplicaStore(), fetch, clock=clock)
            for i in range(destinations)
        ]
        if arch == REAL:
            broker = Broker()
            publisher = CountingPublisher(broker, ledger)
            for d in dests:
                broker.subscribe(d.name, source.root_channel, CallbackSink(d.on_cn))
        else:
            hub = Hub(FeedPublisher(window), ledger, envelope_bytes)
            sim = SimulatedPushSource(source, hub)
            for d in dests:
                hub.register_callback(d.name, source.root_channel, d.on_cn)

        active = 0
        events_total = 0
        touched: dict[str, None] = {}
        for i, cs in enumerate(changesets):
            clock.advance_to(i * cycle_ms)
            source.assign_categories(cs.categories)
            events = source.ingest_changeset(cs)
            source.apply_events(events)
            if arch == REAL:
                if events:
                    source.publish_events(events, publisher)
            else:
                sim.source_update_and_ping(events)
            if events:
                active += 1
            events_total += len(events)
            touched.update((ev.uri, None) for ev in events)
            for d in dests:
                d.drain()

        ledgers[arch] = ledger.snapshot()
        listings[arch] = [d.replica_digest_listing() for d in dests]
        source_listing = [row for row in source.store.live_listing() if row[0] in touched]
        if arch == SIMULATED:
            fetch_history = list(hub.fetch_bytes_history)
            missed = hub.missed_entries

    all_listings = listings[REAL] + listings[SIMULATED]
    identical = all(lst == all_listings[0] for lst in all_listings)
    return ComparisonReport(
        cycles=len(changesets),
        active_cycles=active,
        destinations=destinations,
        events=events_total,
        ledgers=ledgers,
        replicas_identical=identical,
        replicas_match_source=identical and bool(all_listings) and all_listings[0] == source_listing,
        fetch_bytes_history=fetch_history,
        missed_entries=missed,
    )
