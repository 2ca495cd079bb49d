"""The Source: ingests changesets, keeps every version, fires CNs and forgets them."""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol

from pushsync.core.clock import Clock, WallClock
from pushsync.core.types import (
    ChangeNotification,
    Changeset,
    ChannelPath,
    EventKind,
    ResourceVersion,
    canonical_body,
    digest_bytes,
    parse_triple_line,
)
from pushsync.core.uri import NormalizedUri, normalize_uri
from pushsync.errors import BrokerUnavailable, MalformedUri
from pushsync.source.feed import ChangesetFeed
from pushsync.source.store import CanonicalStore

logger = logging.getLogger(__name__)

DEFAULT_ROOT_CHANNEL = ChannelPath(("dbpedia",))


class Publisher(Protocol):
    """What the Source needs from a Service: satisfied by ``Broker``,
    ``BrokerClient`` and the baseline's feed publisher."""

    def create_channel(self, path: ChannelPath) -> object: ...

    def publish(self, path: ChannelPath, cn: ChangeNotification) -> object: ...


@dataclass(frozen=True)
class ChangeEvent:
    kind: EventKind
    uri: NormalizedUri
    body: bytes | None = None

    @property
    def digest(self) -> str:
        return digest_bytes(self.body) if self.body is not None else ""


@dataclass(frozen=True)
class DeltaEntry:
    uri: NormalizedUri
    old_version: int
    new_version: int  # 0 means tombstoned


@dataclass
class CycleReport:
    cycle_ids: tuple[int, ...] = ()
    events_emitted: dict[EventKind, int] = field(
        default_factory=lambda: {k: 0 for k in EventKind}
    )
    cns_published: int = 0
    changeset_bytes: int = 0
    excluded_lines: int = 0
    events: tuple[ChangeEvent, ...] = ()
    feed_error: str | None = None
    publish_error: str | None = None

    @property
    def total_events(self) -> int:
        return sum(self.events_emitted.values())


class Source:
    """Server of record.

    The only state kept between cycles is the canonical store and the seq
    counter; published CNs are not retained anywhere.
    """

    def __init__(
        self,
        store: CanonicalStore | None = None,
        clock: Clock | None = None,
        root_channel: ChannelPath = DEFAULT_ROOT_CHANNEL,
    ) -> None:
        self.store = store if store is not None else CanonicalStore()
        self.clock = clock or WallClock()
        self.root_channel = root_channel
        self._seq = itertools.count(1)
        self._write_lock = threading.Lock()
        self.excluded = 0
        self.cns_published = 0

    # -- ingest / apply -----------------------------------------------------

    def load_baseline(self, resources: Mapping[str, Iterable[str]]) -> int:
        """Preload resources without announcing them (the initial dump)."""
        t = self.clock.now_ms()
        n = 0
        with self._write_lock:
            for raw_uri, lines in resources.items():
                uri = normalize_uri(raw_uri)
                canon = [parse_triple_line(line)[1] for line in lines]
                self.store.append_version(uri, canonical_body(canon), t)
                n += 1
        return n

    def _group(self, lines: Iterable[str]) -> dict[NormalizedUri, set[str]]:
        grouped: dict[NormalizedUri, set[str]] = {}
        for line in lines:
            try:
                uri, canon = parse_triple_line(line)
            except MalformedUri as exc:
                self.excluded += 1
                logger.debug("excluding malformed line: %s", exc)
                continue
            grouped.setdefault(uri, set()).add(canon)
        return grouped

    def ingest_changeset(self, cs: Changeset) -> list[ChangeEvent]:
        """Classify one cycle's changes per subject. Does not modify the store.

        Deletions apply before additions. A subject with added lines is a
        create if it is not live, otherwise an update. A subject with only
        removed lines is a delete when nothing remains, an update when some
        lines survive. Subjects whose net triple set is unchanged emit nothing.
        """
        adds = self._group(cs.updated_lines)
        dels = self._group(cs.deleted_lines)
        subjects = list(adds) + [u for u in dels if u not in adds]

        events: list[ChangeEvent] = []
        for uri in subjects:
            live = self.store.is_live(uri)
            before = self.store.current_lines(uri)
            after = (before - dels.get(uri, set())) | adds.get(uri, set())
            if not live:
                if uri in adds:
                    events.append(ChangeEvent(EventKind.CREATE, uri, canonical_body(after)))
            elif not after:
                events.append(ChangeEvent(EventKind.DELETE, uri))
            elif after != before:
                events.append(ChangeEvent(EventKind.UPDATE, uri, canonical_body(after)))
        return events

    def apply_events(self, events: Iterable[ChangeEvent]) -> list[DeltaEntry]:
        t = self.clock.now_ms()
        delta = []
        with self._write_lock:
            for ev in events:
                if ev.kind is EventKind.DELETE:
                    old = self.store.tombstone(ev.uri)
                    delta.append(DeltaEntry(ev.uri, old, 0))
                else:
                    old, new = self.store.append_version(ev.uri, ev.body, t)
                    delta.append(DeltaEntry(ev.uri, old, new))
        return delta

    def assign_categories(self, pairs: Iterable[tuple[str, str]]) -> None:
        for raw_uri, channel in pairs:
            try:
                uri = normalize_uri(raw_uri)
                path = ChannelPath.parse(channel)
            except (MalformedUri, ValueError):
                self.excluded += 1
                continue
            self.store.assign_category(uri, path)

    # -- notification -------------------------------------------------------

    def channels_for(self, uri: NormalizedUri) -> list[ChannelPath]:
        return [self.root_channel] + [
            c for c in self.store.categories.get(uri, []) if c != self.root_channel
        ]

    def publish_events(self, events: Iterable[ChangeEvent], publisher: Publisher) -> int:
        """Send one CN per event on the all-changes channel plus one per category.

        Raises:
            BrokerUnavailable: publishing stopped; ``published`` holds how
                many CNs went out before the failure.
        """
        created: set[ChannelPath] = set()
        count = 0
        now = self.clock.now_ms()
        try:
            for ev in events:
                digest = ev.digest
                for channel in self.channels_for(ev.uri):
                    if channel not in created:
                        publisher.create_channel(channel)
                        created.add(channel)
                    cn = ChangeNotification(
                        seq=next(self._seq),
                        kind=ev.kind,
                        uri=ev.uri,
                        event_time=now,
                        channel=channel,
                        digest=digest,
                    )
                    publisher.publish(channel, cn)
                    count += 1
        except BrokerUnavailable as exc:
            self.cns_published += count
            raise BrokerUnavailable(str(exc), published=count) from exc
        except OSError as exc:
            self.cns_published += count
            raise BrokerUnavailable(f"publish failed: {exc}", published=count) from exc
        self.cns_published += count
        return count

    # -- content transfer ---------------------------------------------------

    def get_representation(self, uri: str) -> ResourceVersion:
        """Latest version at call time (possibly newer than the CN that asked).

        Raises:
            NotFound: never existed.
            Gone: tombstoned.
        """
        return self.store.get(normalize_uri(uri))

    # -- poll loop ----------------------------------------------------------

    def poll_cycle(self, feed: ChangesetFeed, publisher: Publisher) -> CycleReport:
        """Ingest and apply every newly available changeset, then publish the
        resulting CNs as one burst."""
        report = CycleReport()
        try:
            changesets = sorted(feed.poll(), key=lambda cs: cs.cycle_id)
        except Exception as exc:  # any feed problem skips this cycle only
            logger.warning("changeset feed error: %s", exc)
            report.feed_error = str(exc)
            return report

        excluded_before = self.excluded
        events: list[ChangeEvent] = []
        for cs in changesets:
            self.assign_categories(cs.categories)
            cycle_events = self.ingest_changeset(cs)
            self.apply_events(cycle_events)
            events.extend(cycle_events)
            report.changeset_bytes += cs.size_bytes()
        report.cycle_ids = tuple(cs.cycle_id for cs in changesets)
        report.excluded_lines = self.excluded - excluded_before
        report.events = tuple(events)
        for ev in events:
            report.events_emitted[ev.kind] += 1

        if events:
            try:
                report.cns_published = self.publish_events(events, publisher)
            except BrokerUnavailable as exc:
                logger.error("publishing aborted after %d CNs: %s", exc.published, exc)
                report.cns_published = exc.published
                report.publish_error = str(exc)
        return report
