"""Deterministic synthetic changeset streams with bursty timing and a fixed event mix."""

from __future__ import annotations

import dataclasses
import math
import random
import re
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import unquote

from pushsync.core.changeset_io import write_changeset
from pushsync.core.types import Changeset, EventKind
from pushsync.core.uri import UNRESERVED, normalize_uri
from pushsync.errors import ConfigError

HOUR_MS = 3_600_000

# update / delete / create; the residual 0.37% of the observed mix is counted as updates
DEFAULT_KIND_MIX = (0.9937, 0.006, 0.0003)

_NAMES = (
    "Café", "Zürich", "São_Paulo", "Kraków", "Ångström", "Ελλάδα", "Москва",
    "Plain", "Alpha", "Beatles", "Rock_music", "Music_(band)", "Company", "Berlin",
    "Tōkyō", "Smith,_John", "Jazz", "Opera",
)
_PREDICATES = (
    "abstract", "label", "genre", "birthPlace", "foundingYear", "location",
    "associatedBand", "wikiPageID", "type", "comment", "industry", "recordLabel",
)
_WORDS = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliett", "kilo", "lima", "mike", "november", "oscar", "papa",
    "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
    "xray", "yankee", "zulu", "música", "straße",
)

_PREFIX = "http://dbpedia.org/resource/"
_ESCAPE_RE = re.compile(r"%[0-9A-F]{2}")


@dataclass(frozen=True)
class WorkloadConfig:
    """Knobs for :func:`generate_workload`. Times are virtual milliseconds."""

    seed: int = 7
    duration_ms: int = 8 * HOUR_MS
    poll_interval_ms: int = 30_000
    interval_ms: int = 300_000
    source_processing_ms: int = 2_000
    total_events: int | None = None
    # two changed graphs per second
    mean_events_per_cycle: float = 60.0
    profile: str = "bursty"
    script: tuple[int, ...] = ()
    max_events_per_cycle: int = 500
    kind_mix: tuple[float, float, float] = DEFAULT_KIND_MIX
    min_lines: int = 10
    max_lines: int = 60
    changed_fraction: float = 0.1
    baseline_resources: int = 5_000
    categories: tuple[str, ...] = ("music", "business")
    category_probability: float = 0.0
    spelling_variation: float = 0.05
    malformed_fraction: float = 0.0
    root_channel: str = "dbpedia"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind_mix", tuple(float(p) for p in self.kind_mix))
        object.__setattr__(self, "script", tuple(int(c) for c in self.script))
        object.__setattr__(self, "categories", tuple(self.categories))
        self.validate()

    def validate(self) -> None:
        if len(self.kind_mix) != 3 or any(p < 0 for p in self.kind_mix):
            raise ConfigError("kind_mix needs three non-negative probabilities")
        if not math.isclose(sum(self.kind_mix), 1.0, abs_tol=1e-9):
            raise ConfigError(f"kind_mix must sum to 1, got {sum(self.kind_mix)}")
        for name in ("category_probability", "spelling_variation", "malformed_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be within [0, 1]")
        if not 0.0 < self.changed_fraction <= 1.0:
            raise ConfigError("changed_fraction must be within (0, 1]")
        if self.poll_interval_ms <= 0 or self.interval_ms <= 0 or self.duration_ms < 0:
            raise ConfigError("durations must be positive")
        if not 1 <= self.min_lines <= self.max_lines:
            raise ConfigError("need 1 <= min_lines <= max_lines")
        if self.profile not in ("bursty", "steady", "script"):
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.profile == "script" and not self.script:
            raise ConfigError("profile=script needs a script")
        if any(c < 0 for c in self.script):
            raise ConfigError("script counts must be >= 0")
        if (self.total_events is not None and self.total_events < 0) or self.mean_events_per_cycle < 0:
            raise ConfigError("event counts must be >= 0")
        if self.max_events_per_cycle <= 0 or self.baseline_resources < 0:
            raise ConfigError("max_events_per_cycle must be > 0, baseline_resources >= 0")

    @property
    def cycles(self) -> int:
        if self.profile == "script":
            return len(self.script)
        return self.duration_ms // self.poll_interval_ms

    @property
    def intervals(self) -> int:
        return math.ceil(self.cycles * self.poll_interval_ms / self.interval_ms)

    def replace(self, **changes) -> WorkloadConfig:
        return dataclasses.replace(self, **changes)

    # -- key=value files ----------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> WorkloadConfig:
        kinds = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in kinds:
                raise ConfigError(f"line {lineno}: unknown or malformed entry {raw!r}")
            values[key] = _coerce(kinds[key].type, value, key)
        return cls(**values)

    @classmethod
    def from_file(cls, path: Path | str) -> WorkloadConfig:
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif v is None:
                v = ""
            out.append(f"{f.name}={v}")
        return "\n".join(out) + "\n"


def _coerce(type_name: str, value: str, key: str):
    try:
        if type_name.startswith("tuple[float"):
            return tuple(float(x) for x in value.split(","))
        if type_name.startswith("tuple[int"):
            return tuple(int(x) for x in value.split(",")) if value else ()
        if type_name.startswith("tuple[str"):
            return tuple(x.strip() for x in value.split(",") if x.strip())
        if type_name.startswith("int | None"):
            return int(value) if value else None
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


@dataclass(frozen=True)
class PlannedEvent:
    cycle_id: int
    kind: EventKind
    uri: str


@dataclass
class Workload:
    config: WorkloadConfig
    baseline: dict[str, list[str]]
    # (available_at_ms, changeset); only cycles with at least one event
    changesets: list[tuple[int, Changeset]]
    cycle_times: list[int]
    events: list[PlannedEvent]
    malformed_lines: int = 0
    baseline_categories: list[tuple[str, str]] = field(default_factory=list)

    @property
    def kind_counts(self) -> dict[EventKind, int]:
        out = {k: 0 for k in EventKind}
        for ev in self.events:
            out[ev.kind] += 1
        return out

    def per_cycle_counts(self) -> list[int]:
        counts = [0] * len(self.cycle_times)
        for ev in self.events:
            counts[ev.cycle_id - 1] += 1
        return counts

    def baseline_changeset(self) -> Changeset:
        lines = [line for uri in self.baseline for line in self.baseline[uri]]
        return Changeset(0, tuple(lines), (), tuple(self.baseline_categories))

    def write(self, directory: Path | str, include_baseline: bool = False) -> list[Path]:
        """Write changeset files; cycle 0 carries the baseline when asked."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        if include_baseline and self.baseline:
            write_changeset(d, self.baseline_changeset())
        for _, cs in self.changesets:
            write_changeset(d, cs)
        return sorted(d.iterdir())


def allocate_counts(total: int, weights: list[float], cap: int) -> list[int]:
    """Split ``total`` over cycles proportionally to ``weights`` (largest
    remainder), never exceeding ``cap`` per cycle."""
    n = len(weights)
    if n == 0:
        if total:
            raise ConfigError("no cycles to place events in")
        return []
    if total > cap * n:
        raise ConfigError(f"{total} events do not fit in {n} cycles of at most {cap}")
    counts = [0] * n
    remaining = total
    active = [i for i in range(n) if weights[i] > 0] or list(range(n))
    while remaining > 0:
        open_ = [i for i in active if counts[i] < cap]
        if not open_:
            active = [i for i in range(n) if counts[i] < cap]
            continue
        # exact rationals so that equal remainders tie-break by cycle index
        w = {i: Fraction(weights[i]) for i in open_}
        if not any(w.values()):
            w = dict.fromkeys(open_, Fraction(1))
        wsum = sum(w.values())
        shares = {i: w[i] * remaining / wsum for i in open_}
        clipped = False
        for i in open_:
            whole = int(shares[i])
            if whole >= cap - counts[i]:
                whole, clipped = cap - counts[i], True
            counts[i] += whole
            remaining -= whole
        if clipped:
            continue  # re-split what is left over the cycles that still have room
        # largest remainder: the leftover is smaller than the number of open cycles
        for i in sorted(open_, key=lambda i: (-(shares[i] - int(shares[i])), i)):
            if remaining == 0:
                break
            counts[i] += 1
            remaining -= 1
    return counts


def _bursty_weights(rng: random.Random, cycles: int) -> list[float]:
    """Regime-switching burst weights: long idle stretches, steady activity, surges."""
    stay = {"idle": 0.99, "normal": 0.97, "surge": 0.85}
    state = "normal"
    weights = []
    for _ in range(cycles):
        if state == "idle":
            weights.append(0.0)
        elif state == "normal":
            weights.append(rng.expovariate(1.0))
        else:
            weights.append(6.0 * rng.expovariate(1.0))
        if rng.random() >= stay[state]:
            if state == "normal":
                state = "idle" if rng.random() < 0.35 else "surge"
            else:
                state = "normal"
    return weights


class _Generator:
    def __init__(self, cfg: WorkloadConfig) -> None:
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.lines: dict[str, list[str]] = {}
        self.live: list[str] = []
        self.live_index: dict[str, int] = {}
        self.next_resource = 0
        self.next_token = 0
        self.categorized: set[str] = set()

    # -- naming -------------------------------------------------------------

    def _new_uri(self) -> str:
        i = self.next_resource
        self.next_resource += 1
        name = f"{_NAMES[i % len(_NAMES)]}_{i}"
        return normalize_uri(_PREFIX + name)

    def spell(self, uri: str) -> str:
        """A raw spelling of ``uri``: usually canonical, sometimes with escapes
        decoded, hex digits lowercased, or the first character escaped."""
        if self.rng.random() >= self.cfg.spelling_variation:
            return uri
        name = uri[len(_PREFIX):]
        choice = self.rng.randrange(3)
        if choice == 0 and "%" in name:
            return _PREFIX + unquote(name, errors="strict")
        if choice == 1 and "%" in name:
            return _PREFIX + _ESCAPE_RE.sub(lambda m: m.group().lower(), name)
        if name[0] in UNRESERVED:
            return _PREFIX + f"%{ord(name[0]):02x}" + name[1:]
        return uri

    def _line_body(self) -> str:
        self.next_token += 1
        p = _PREDICATES[self.rng.randrange(len(_PREDICATES))]
        words = " ".join(self.rng.choice(_WORDS) for _ in range(self.rng.randint(2, 9)))
        return f'<http://dbpedia.org/ontology/{p}> "{words} {self.next_token}"@en .'

    # -- state --------------------------------------------------------------

    def _add_live(self, uri: str) -> None:
        self.live_index[uri] = len(self.live)
        self.live.append(uri)

    def _remove_live(self, uri: str) -> None:
        idx = self.live_index.pop(uri)
        last = self.live.pop()
        if last != uri:
            self.live[idx] = last
            self.live_index[last] = idx

    def _fresh_resource(self) -> tuple[str, list[str]]:
        uri = self._new_uri()
        n = self.rng.randint(self.cfg.min_lines, self.cfg.max_lines)
        rests = [self._line_body() for _ in range(n)]
        return uri, [f"<{uri}> {r}" for r in rests]

    def _categories_for(self, uri: str) -> list[tuple[str, str]]:
        if uri in self.categorized:
            return []
        self.categorized.add(uri)
        out = []
        for cat in self.cfg.categories:
            if self.rng.random() < self.cfg.category_probability:
                out.append((uri, f"{self.cfg.root_channel}/{cat}"))
        return out

    def baseline(self) -> tuple[dict[str, list[str]], list[tuple[str, str]]]:
        out = {}
        cats = []
        for _ in range(self.cfg.baseline_resources):
            uri, lines = self._fresh_resource()
            self.lines[uri] = lines
            self._add_live(uri)
            out[uri] = list(lines)
            cats.extend(self._categories_for(uri))
        return out, cats

    def _emit(self, canon_line: str, uri: str) -> str:
        return f"<{self.spell(uri)}> {canon_line.split(' ', 1)[1]}"

    def _pick_live(self, used: set[str]) -> str | None:
        if len(self.live) <= len(used):
            return None
        for _ in range(64):
            uri = self.live[self.rng.randrange(len(self.live))]
            if uri not in used:
                return uri
        return None

    def _choose_kind(self) -> EventKind:
        r = self.rng.random()
        upd, dele, _ = self.cfg.kind_mix
        if r < upd:
            return EventKind.UPDATE
        if r < upd + dele:
            return EventKind.DELETE
        return EventKind.CREATE

    def cycle(self, cycle_id: int, count: int) -> tuple[Changeset, list[PlannedEvent], int]:
        updated: list[str] = []
        deleted: list[str] = []
        categories: list[tuple[str, str]] = []
        events: list[PlannedEvent] = []
        used: set[str] = set()
        malformed = 0
        for _ in range(count):
            kind = self._choose_kind()
            uri = None
            if kind is not EventKind.CREATE:
                uri = self._pick_live(used)
                if uri is None:
                    kind = EventKind.CREATE
            if kind is EventKind.CREATE:
                uri, lines = self._fresh_resource()
                self.lines[uri] = lines
                self._add_live(uri)
                updated.extend(self._emit(line, uri) for line in lines)
            elif kind is EventKind.DELETE:
                deleted.extend(self._emit(line, uri) for line in self.lines.pop(uri))
                self._remove_live(uri)
            else:
                lines = self.lines[uri]
                n = len(lines)
                k = max(1, round(self.cfg.changed_fraction * n))
                k_del = min(k // 2, n - 1)
                k_add = k - k_del
                for _ in range(k_del):
                    victim = lines.pop(self.rng.randrange(len(lines)))
                    deleted.append(self._emit(victim, uri))
                for _ in range(k_add):
                    line = f"<{uri}> {self._line_body()}"
                    lines.append(line)
                    updated.append(self._emit(line, uri))
            used.add(uri)
            categories.extend(self._categories_for(uri))
            events.append(PlannedEvent(cycle_id, kind, uri))
            if self.cfg.malformed_fraction and self.rng.random() < self.cfg.malformed_fraction:
                malformed += 1
                updated.append(f'<http://dbpedia.org/resource/Broken%G{self.next_token}> '
                               f'<http://dbpedia.org/ontology/label> "broken" .')
        cs = Changeset(cycle_id, tuple(updated), tuple(deleted), tuple(categories))
        return cs, events, malformed


def generate_workload(cfg: WorkloadConfig) -> Workload:
    """Build the baseline dump and one changeset per non-idle poll cycle.

    Output is a pure function of ``cfg`` (including its seed).
    """
    cfg.validate()
    gen = _Generator(cfg)
    baseline, baseline_cats = gen.baseline()
    cycles = cfg.cycles

    if cfg.profile == "script":
        counts = list(cfg.script)
    else:
        total = cfg.total_events
        if total is None:
            total = round(cfg.mean_events_per_cycle * cycles)
        if cfg.profile == "steady":
            weights = [1.0] * cycles
        else:
            weights = _bursty_weights(gen.rng, cycles)
        counts = allocate_counts(total, weights, cfg.max_events_per_cycle)

    cycle_times = [k * cfg.poll_interval_ms + cfg.source_processing_ms for k in range(cycles)]
    changesets = []
    events: list[PlannedEvent] = []
    malformed = 0
    for k, count in enumerate(counts):
        if count == 0:
            continue
        cs, evs, bad = gen.cycle(k + 1, count)
        changesets.append((cycle_times[k], cs))
        events.extend(evs)
        malformed += bad
    return Workload(cfg, baseline, changesets, cycle_times, events, malformed, baseline_cats)
