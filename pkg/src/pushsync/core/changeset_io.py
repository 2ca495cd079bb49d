"""Changeset files: ``<cycle>.updated.txt``, ``<cycle>.deleted.txt`` and the
optional ``<cycle>.categories.txt`` (``uri<TAB>channel-path`` per row)."""

from __future__ import annotations

import os
import re
from pathlib import Path

from pushsync.core.types import Changeset

_NAME_RE = re.compile(r"(\d+)\.(updated|deleted|categories)\.txt\Z")


def changeset_paths(directory: Path | str, cycle_id: int) -> dict[str, Path]:
    d = Path(directory)
    return {part: d / f"{cycle_id}.{part}.txt" for part in ("updated", "deleted", "categories")}


def _write_lines(path: Path, lines) -> None:
    data = "".join(f"{line}\n" for line in lines).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_changeset(directory: Path | str, cs: Changeset) -> None:
    """Write a changeset. Categories go first and the deleted file last, so a
    watcher that waits for both main files never sees a partial cycle."""
    paths = changeset_paths(directory, cs.cycle_id)
    Path(directory).mkdir(parents=True, exist_ok=True)
    if cs.categories:
        _write_lines(paths["categories"], (f"{u}\t{c}" for u, c in cs.categories))
    _write_lines(paths["updated"], cs.updated_lines)
    _write_lines(paths["deleted"], cs.deleted_lines)


def _read_lines(path: Path) -> list[str]:
    if not path.exists():
        return []
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def read_changeset(directory: Path | str, cycle_id: int) -> Changeset:
    paths = changeset_paths(directory, cycle_id)
    categories = []
    for row in _read_lines(paths["categories"]):
        uri, _, channel = row.partition("\t")
        categories.append((uri, channel))
    return Changeset(
        cycle_id=cycle_id,
        updated_lines=tuple(_read_lines(paths["updated"])),
        deleted_lines=tuple(_read_lines(paths["deleted"])),
        categories=tuple(categories),
    )


def complete_cycles(directory: Path | str) -> list[int]:
    """Cycle ids for which both the updated and deleted files exist, ascending."""
    seen: dict[int, set[str]] = {}
    d = Path(directory)
    if not d.is_dir():
        return []
    for entry in os.listdir(d):
        m = _NAME_RE.match(entry)
        if m:
            seen.setdefault(int(m.group(1)), set()).add(m.group(2))
    return sorted(c for c, parts in seen.items() if {"updated", "deleted"} <= parts)
