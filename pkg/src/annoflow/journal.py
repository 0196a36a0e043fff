"""Append-only session journal: line-delimited JSON with a versioned header.

Every state change and every backend response is recorded, so a session can
be resumed after a crash and a run can be replayed offline bit-for-bit.
Records carry no wall-clock fields; identical runs produce identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import IO

from .errors import JournalError

FORMAT = "annoflow.journal"
VERSION = 1


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Journal:
    """Writer handle. Events get consecutive sequence numbers starting at 0;
    the header line is not an event."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.events: list[dict] = []
        self._fh: IO[str] | None = None

    def open_new(self) -> "Journal":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w")
        self._fh.write(_dumps({"format": FORMAT, "version": VERSION}) + "\n")
        self._fh.flush()
        return self

    def open_append(self, events: list[dict]) -> "Journal":
        self.events = list(events)
        self._fh = self.path.open("a")
        return self

    def append(self, event: dict) -> dict:
        if self._fh is None:
            raise JournalError("journal is not open")
        record = {"seq": len(self.events), **event}
        self._fh.write(_dumps(record) + "\n")
        self._fh.flush()
        self.events.append(record)
        return record

    def append_all(self, events: list[dict]) -> list[dict]:
        return [self.append(e) for e in events]

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_journal(path: str | Path) -> list[dict]:
    """Parse a journal file; returns the event list (header validated and
    stripped)."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise JournalError(f"empty journal {path}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise JournalError(f"bad journal header: {exc}") from exc
    if header.get("format") != FORMAT:
        raise JournalError(f"not a session journal: {header!r}")
    if header.get("version") != VERSION:
        raise JournalError(f"unsupported journal version {header.get('version')}")
    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise JournalError(f"line {lineno}: {exc}") from exc
        if event.get("seq") != len(events):
            raise JournalError(
                f"line {lineno}: sequence gap (expected {len(events)}, got {event.get('seq')})"
            )
        events.append(event)
    return events
