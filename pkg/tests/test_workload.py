from __future__ import annotations

import hashlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pushsync.core.changeset_io import read_changeset
from pushsync.core.types import EventKind
from pushsync.core.uri import normalize_uri
from pushsync.errors import ConfigError
from pushsync.harness.workload import (
    DEFAULT_KIND_MIX, WorkloadConfig, allocate_counts, generate_workload,
)

SMALL = WorkloadConfig(total_events=400, baseline_resources=100, duration_ms=3_600_000)


def tree_digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


def test_same_seed_byte_identical_files(tmp_path):
    a = generate_workload(SMALL).write(tmp_path / "a", include_baseline=True)
    b = generate_workload(SMALL).write(tmp_path / "b", include_baseline=True)
    assert len(a) == len(b) > 0
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_different_seed_differs():
    a = generate_workload(SMALL)
    b = generate_workload(SMALL.replace(seed=8))
    assert a.changesets != b.changesets


def test_written_files_read_back(tmp_path):
    w = generate_workload(SMALL)
    w.write(tmp_path)
    _, cs = w.changesets[0]
    back = read_changeset(tmp_path, cs.cycle_id)
    assert back.updated_lines == cs.updated_lines and back.deleted_lines == cs.deleted_lines


def test_event_mix_within_half_point_over_50k():
    w = generate_workload(WorkloadConfig(total_events=50_000, baseline_resources=2_000))
    counts = w.kind_counts
    n = sum(counts.values())
    assert n == 50_000
    for kind, expected in zip((EventKind.UPDATE, EventKind.DELETE, EventKind.CREATE), DEFAULT_KIND_MIX):
        assert abs(100 * counts[kind] / n - 100 * expected) <= 0.5


def test_total_events_exact_and_placed_in_cycles():
    w = generate_workload(SMALL)
    assert len(w.events) == 400
    assert sum(w.per_cycle_counts()) == 400
    assert len(w.cycle_times) == SMALL.cycles == 120
    assert all(t % SMALL.poll_interval_ms == SMALL.source_processing_ms for t in w.cycle_times)


def test_bursty_profile_has_idle_cycles_and_surges():
    w = generate_workload(WorkloadConfig(total_events=13_819, baseline_resources=500))
    per = w.per_cycle_counts()
    assert per.count(0) > 10
    assert max(per) > 4 * (sum(per) / len(per))


def test_steady_profile_flat():
    cfg = SMALL.replace(profile="steady", total_events=None, mean_events_per_cycle=3)
    assert set(generate_workload(cfg).per_cycle_counts()) == {3}


def test_script_profile():
    w = generate_workload(SMALL.replace(profile="script", script=(5, 0, 2)))
    assert w.per_cycle_counts() == [5, 0, 2]
    assert [cs.cycle_id for _, cs in w.changesets] == [1, 3]


def test_each_uri_at_most_once_per_cycle():
    w = generate_workload(SMALL)
    by_cycle = {}
    for ev in w.events:
        by_cycle.setdefault(ev.cycle_id, []).append(ev.uri)
    assert all(len(v) == len(set(v)) for v in by_cycle.values())


def test_spelling_variants_normalize_to_planned_uris():
    w = generate_workload(SMALL.replace(spelling_variation=1.0))
    raw_subjects = {line[1:line.index(">")] for _, cs in w.changesets
                    for line in cs.updated_lines + cs.deleted_lines}
    planned = {ev.uri for ev in w.events}
    assert {normalize_uri(s) for s in raw_subjects} == planned
    assert raw_subjects - planned, "some subjects must be non-canonical spellings"


def test_malformed_lines_counted():
    w = generate_workload(SMALL.replace(malformed_fraction=0.5))
    assert w.malformed_lines > 100


def test_delete_only_mix_needs_live_resources():
    w = generate_workload(SMALL.replace(kind_mix=(0.0, 1.0, 0.0), total_events=50))
    assert w.kind_counts[EventKind.DELETE] == 50


class TestConfig:
    def test_text_round_trip(self):
        cfg = SMALL.replace(script=(1, 2), profile="script", kind_mix=(0.5, 0.25, 0.25))
        assert WorkloadConfig.from_text(cfg.to_text()) == cfg

    def test_comments_and_blank_lines(self):
        cfg = WorkloadConfig.from_text("# run 3\n\nseed = 3  # third\ntotal_events=10\n")
        assert cfg.seed == 3 and cfg.total_events == 10

    @pytest.mark.parametrize("text", [
        "bogus=1", "seed", "seed=abc", "kind_mix=0.5,0.5,0.5", "kind_mix=1,0",
        "profile=weird", "profile=script", "changed_fraction=0", "min_lines=5\nmax_lines=2",
        "spelling_variation=1.5", "poll_interval_ms=0", "script=1,-2",
    ])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            WorkloadConfig.from_text(text)

    def test_from_file(self, tmp_path):
        p = tmp_path / "w.conf"
        p.write_text("seed=11\n", encoding="utf-8")
        assert WorkloadConfig.from_file(p).seed == 11


class TestAllocate:
    def test_proportional(self):
        assert allocate_counts(10, [1, 1, 2, 0], 100) == [3, 2, 5, 0]

    def test_overflow_spills_into_zero_weight_cycles(self):
        assert sorted(allocate_counts(10, [1, 0, 0], 4)) == [3, 3, 4]

    def test_impossible(self):
        with pytest.raises(ConfigError):
            allocate_counts(10, [1, 1], 4)
        with pytest.raises(ConfigError):
            allocate_counts(1, [], 4)

    @given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=30),
           st.integers(1, 50), st.data())
    def test_sum_and_cap(self, weights, cap, data):
        total = data.draw(st.integers(0, cap * len(weights)))
        counts = allocate_counts(total, weights, cap)
        assert sum(counts) == total
        assert all(0 <= c <= cap for c in counts)

    @given(st.lists(st.integers(0, 20), min_size=1, max_size=12).filter(any), st.integers(0, 200))
    def test_matches_hamilton_method_when_cap_never_binds(self, weights, total):
        from fractions import Fraction
        wsum = sum(weights)
        quotas = [Fraction(total * w, wsum) for w in weights]
        expected = [int(q) for q in quotas]
        order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - int(quotas[i])), i))
        for i in order[:total - sum(expected)]:
            expected[i] += 1
        assert allocate_counts(total, [float(w) for w in weights], total + 1) == expected
