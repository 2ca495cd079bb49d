"""Exit criteria. Each test prints one PASS/FAIL line for its criterion."""

from __future__ import annotations

import itertools
import random

import pytest

from pushsync.broker.core import Broker, CallbackSink
from pushsync.core.clock import VirtualClock
from pushsync.core.codec import decode_cn, encode_cn
from pushsync.core.types import ChangeNotification, ChannelPath, EventKind, digest_bytes
from pushsync.core.uri import RESERVED, normalize_uri
from pushsync.destination import Destination, MemoryReplicaStore
from pushsync.harness.experiments import (
    ACCURACY_EVENTS, ACCURACY_SEEDS, FAULTS_INJECTED, REFERENCE_RUN_TOTALS, run_preset,
)
from pushsync.harness.workload import DEFAULT_KIND_MIX, WorkloadConfig, generate_workload
from pushsync.source.source import ChangeEvent, Source

from strategies import URI_ALPHABET, canonical_char

pytestmark = pytest.mark.acceptance


def _detail(result) -> str:
    return "; ".join(c.line() for c in result.checks)


# 1 ---------------------------------------------------------------------------


def test_lockstep(criterion):
    result = run_preset("lockstep", seed=7)
    run = result.runs[0]
    ok = (run.total_cns >= 13_000 and run.complete and run.all_drained and run.max_queue > 0)
    criterion(1, "lockstep", ok,
              f"{run.total_cns:,} CNs, {run.intervals} intervals, all drained={run.all_drained}, "
              + ", ".join(f"MaxQ {d.name}={d.max_queue}" for d in run.destinations))
    assert run.total_cns == REFERENCE_RUN_TOTALS[0]
    assert ok, _detail(result)


# 2 ---------------------------------------------------------------------------


def test_accuracy(criterion):
    result = run_preset("accuracy", seed=7)
    runs, fault = result.runs[:-1], result.runs[-1]
    zero = all(r.diff_count == 0 and r.complete for r in runs)
    found = fault.destinations[0].diff.count
    ok = (len(runs) == ACCURACY_SEEDS and min(r.total_cns for r in runs) >= ACCURACY_EVENTS
          and zero and found == FAULTS_INJECTED and result.passed)
    criterion(2, "accuracy", ok,
              f"{len(runs)} seeds, min {min(r.total_cns for r in runs):,} CNs/run, "
              f"total diff {sum(r.diff_count for r in runs)} (0.0%); "
              f"{FAULTS_INJECTED} planted drops -> diff {found}")
    assert ok, _detail(result)


# 3 ---------------------------------------------------------------------------

MAX_CHILDREN = 4
MAX_DEPTH = 3
MAX_SUBSCRIPTIONS = 10


def _forests(depth: int, budget: int):
    """Canonical forests (sorted tuples of trees) of height <= depth, <= budget nodes.

    A tree is a forest of children under one node.
    """
    if depth == 0 or budget == 0:
        yield ()
        return
    trees = [(t, 1 + _size(t)) for t in _forests(depth - 1, budget - 1)]
    trees.sort()

    def pick(start: int, left: int, count: int):
        yield ()
        if count == MAX_CHILDREN:
            return
        for i in range(start, len(trees)):
            t, n = trees[i]
            if n <= left:
                for rest in pick(i, left - n, count + 1):
                    yield (t,) + rest

    yield from pick(0, budget, 0)


def _size(forest) -> int:
    return sum(1 + _size(t) for t in forest)


def _paths(forest, prefix=()):
    for i, children in enumerate(forest):
        p = prefix + (f"c{i}",)
        yield ChannelPath(p)
        yield from _paths(children, p)


def _check_instance(paths: list[ChannelPath], subs: list[ChannelPath]) -> list[str]:
    """Publish once on every channel; compare what each subscription saw
    with the brute-force predicate. Returns the list of problems."""
    broker = Broker()
    for p in paths:
        broker.create_channel(p)
    got: list[list[int]] = [[] for _ in subs]
    for i, s in enumerate(subs):
        broker.subscribe(f"s{i}", s, CallbackSink(lambda cn, box=got[i]: box.append(cn.seq)))
    for seq, p in enumerate(paths):
        broker.publish(p, ChangeNotification(seq, EventKind.DELETE, "http://ex.org/r", seq, p))
    problems = []
    for i, s in enumerate(subs):
        want = [seq for seq, p in enumerate(paths)
                if p.segments[:len(s.segments)] == s.segments]
        if got[i] != want:
            problems.append(f"sub {s} on {[str(p) for p in paths]}: got {got[i]} want {want}")
    return problems


def test_channel_fanout_exhaustive(criterion):
    instances = 0
    problems: list[str] = []
    # every forest with at most 10 channels: one subscription per channel
    for forest in _forests(MAX_DEPTH, MAX_SUBSCRIPTIONS):
        paths = list(_paths(forest))
        if not paths:
            continue
        instances += 1
        problems += _check_instance(paths, paths)
    shapes = instances
    # the full tree (4 roots x 4 x 4): every single (subscription, publish) pair
    full = [ChannelPath(tuple(f"c{i}" for i in combo[:d]))
            for d in range(1, MAX_DEPTH + 1)
            for combo in itertools.product(range(MAX_CHILDREN), repeat=d)]
    full = sorted(set(full), key=lambda p: p.segments)
    for s in full:
        instances += 1
        problems += _check_instance(full, [s])
    ok = not problems
    criterion(3, "channel nesting", ok,
              f"{shapes} channel forests (<=10 channels, depth<=3, <=4 children) fully subscribed "
              f"+ {len(full)} single subscriptions on the full {len(full)}-channel tree; "
              f"{len(problems)} mismatches")
    assert ok, problems[:5]


# 4 ---------------------------------------------------------------------------


def test_architecture_comparison(criterion):
    result = run_preset("compare-architectures", seed=7)
    passed = result.passed
    criterion(4, "architecture comparison", passed, _detail(result))
    assert passed, _detail(result)


# 5 ---------------------------------------------------------------------------


def test_payload(criterion):
    result = run_preset("payload", seed=7)
    passed = result.passed
    criterion(5, "payload accounting", passed, _detail(result))
    assert passed, _detail(result)


# 6 ---------------------------------------------------------------------------


def test_event_mix(criterion):
    w = generate_workload(WorkloadConfig(seed=7, total_events=50_000, baseline_resources=2_000))
    counts = w.kind_counts
    n = sum(counts.values())
    kinds = (EventKind.UPDATE, EventKind.DELETE, EventKind.CREATE)
    off = {k: 100 * counts[k] / n - 100 * p for k, p in zip(kinds, DEFAULT_KIND_MIX)}
    ok = n >= 50_000 and all(abs(v) <= 0.5 for v in off.values())
    criterion(6, "event mix", ok,
              f"{n:,} events: " + ", ".join(
                  f"{k.value} {100 * counts[k] / n:.3f}% ({off[k]:+.3f} pp)" for k in kinds))
    assert ok


# 7 ---------------------------------------------------------------------------

URIS = ("http://ex.org/a", "http://ex.org/b")


def _event_sequences(n: int):
    def rec(prefix, live):
        if len(prefix) == n:
            yield prefix
            return
        for u in range(len(URIS)):
            yield from rec(prefix + ((u, "put"),), live | {u})
            if u in live:
                yield from rec(prefix + ((u, "del"),), live - {u})

    yield from rec((), frozenset())


def _schedules(n: int):
    """Every order of n CN arrivals ("e") and processing steps ("p") in which
    a step only runs when the queue is non-empty; the rest drains at the end."""
    def rec(left, queued, acc):
        if left == 0:
            yield acc
            return
        yield from rec(left - 1, queued + 1, acc + "e")
        if queued:
            yield from rec(left, queued - 1, acc + "p")

    yield from rec(n, 0, "")


class _Forward:
    def __init__(self, dest: Destination) -> None:
        self.dest = dest

    def create_channel(self, path):
        return None

    def publish(self, path, cn):
        self.dest.on_cn(cn)


def _play(events, schedule) -> bool:
    clock = VirtualClock()
    src = Source(clock=clock)
    dest = Destination("d", MemoryReplicaStore(), src.get_representation, clock=clock)
    out = _Forward(dest)
    it = iter(enumerate(events))
    for step in schedule:
        clock.advance(1)
        if step == "p":
            dest.process_one()
            continue
        i, (u, op) = next(it)
        uri = URIS[u]
        if op == "put":
            kind = EventKind.UPDATE if src.store.is_live(uri) else EventKind.CREATE
            ev = ChangeEvent(kind, uri, f"{uri} v{i}\n".encode())
        else:
            ev = ChangeEvent(EventKind.DELETE, uri)
        src.apply_events([ev])
        src.publish_events([ev], out)
    dest.drain()
    return dest.store.listing() == src.store.live_listing()


def test_stale_race_exhaustive(criterion):
    checked = 0
    bad = []
    for n in range(1, 7):
        schedules = list(_schedules(n))
        for events in _event_sequences(n):
            for schedule in schedules:
                checked += 1
                if not _play(events, schedule):
                    bad.append((events, schedule))
    ok = not bad and checked == 88_192
    criterion(7, "stale race", ok,
              f"{checked:,} (event sequence, processing schedule) pairs over <=6 events on 2 URIs; "
              f"{len(bad)} diverged")
    assert ok, bad[:3]


# 8 ---------------------------------------------------------------------------


def _random_cn(rng: random.Random) -> ChangeNotification:
    kind = rng.choice(list(EventKind))
    chars = "".join(rng.choice(URI_ALPHABET) for _ in range(rng.randint(1, 30)))
    return ChangeNotification(
        seq=rng.randrange(2 ** 63), kind=kind, uri=normalize_uri("http://ex.org/" + chars),
        event_time=rng.randrange(2 ** 53),
        channel=ChannelPath(tuple(rng.choice(["dbpedia", "music", "a_b", "x-1", "ü"])
                                  for _ in range(rng.randint(1, 4)))),
        digest="" if kind is EventKind.DELETE else digest_bytes(rng.randbytes(rng.randint(0, 32))),
    )


def test_codec_and_normalization(criterion):
    rng = random.Random(7)
    codec_fail = 0
    for _ in range(10_000):
        cn = _random_cn(rng)
        if decode_cn(encode_cn(cn)) != cn:
            codec_fail += 1

    uri_fail = 0
    for _ in range(1_000):
        chars = [rng.choice(URI_ALPHABET) for _ in range(rng.randint(1, 30))]
        canonical = "http://ex.org/" + "".join(canonical_char(c) for c in chars)
        spellings = []
        for _ in range(2):
            out = []
            for c in chars:
                how = rng.choice(["literal", "upper", "lower"])
                if how == "literal" or c in RESERVED:
                    out.append(c)
                else:
                    hx = "".join(f"%{b:02X}" for b in c.encode("utf-8"))
                    out.append(hx.lower() if how == "lower" else hx)
            spellings.append(rng.choice(["http", "HTTP", "Http"]) + "://ex.org/" + "".join(out))
        n1, n2 = (normalize_uri(s) for s in spellings)
        if not (n1 == n2 == canonical and normalize_uri(n1) == n1
                and normalize_uri(str(n1)) == n1):
            uri_fail += 1
    ok = codec_fail == 0 and uri_fail == 0
    criterion(8, "codec and normalization", ok,
              f"10,000 CN round trips: {codec_fail} failures; "
              f"1,000 URIs x 2 spellings: {uri_fail} failures")
    assert ok


# negative controls: the exhaustive oracles above must catch broken implementations


def test_fanout_oracle_catches_exact_match_only_broker(monkeypatch):
    original = Broker.matching
    monkeypatch.setattr(Broker, "matching",
                        lambda self, path: [s for s in original(self, path) if s.path == path])
    paths = [ChannelPath(("c0",)), ChannelPath(("c0", "c0"))]
    assert _check_instance(paths, paths)


def test_stale_race_oracle_catches_skip_if_present(monkeypatch):
    from pushsync.destination.destination import Outcome
    original = Destination._handle

    def lazy(self, cn):
        if cn.kind is not EventKind.DELETE and cn.uri in self.store:
            return Outcome.SKIPPED_STALE
        return original(self, cn)

    monkeypatch.setattr(Destination, "_handle", lazy)
    assert not _play(((0, "put"), (0, "put")), "epe")
