"""Append-only event log persistence.

One UTF-8 JSONL file per session, named ``<session_id>.events.jsonl``;
each line is a self-contained record ``{v, sid, turn, kind, ts,
payload}``.  Loads recover from a half-written trailing line by
returning the complete-event prefix and flagging a warning.
"""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path

from .errors import SessionNotFoundError
from .state import SessionEvent

logger = logging.getLogger(__name__)


class EventStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.events.jsonl"

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def append(self, event: SessionEvent) -> None:
        line = json.dumps(event.to_record(), ensure_ascii=False, sort_keys=True)
        with self._lock(event.session_id):
            with open(self._path(event.session_id), "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def exists(self, session_id: str) -> bool:
        return self._path(session_id).exists()

    def session_ids(self) -> list[str]:
        return sorted(p.name[: -len(".events.jsonl")] for p in self.root.glob("*.events.jsonl"))

    def load(self, session_id: str) -> list[SessionEvent]:
        events, _ = self.load_report(session_id)
        return events

    def load_report(self, session_id: str) -> tuple[list[SessionEvent], bool]:
        """Load a session log; returns (events, truncated_tail_recovered)."""
        path = self._path(session_id)
        if not path.exists():
            raise SessionNotFoundError(session_id)
        with self._lock(session_id):
            raw = path.read_text(encoding="utf-8")
        return _parse_log(raw, session_id)


def _parse_log(raw: str, source: str) -> tuple[list[SessionEvent], bool]:
    events: list[SessionEvent] = []
    truncated = False
    lines = raw.split("\n")
    for i, line in enumerate(lines):
        if not line:
            continue
        try:
            events.append(SessionEvent.from_record(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError):
            if i == len(lines) - 1:
                # Half-written trailing record: keep the complete prefix.
                truncated = True
                logger.warning(
                    "%s: dropping partial trailing record (%d bytes)", source, len(line)
                )
                break
            raise
    return events, truncated


def read_events(path: str | Path) -> list[SessionEvent]:
    """Parse any event-log file, independent of a store root."""
    raw = Path(path).read_text(encoding="utf-8")
    events, _ = _parse_log(raw, str(path))
    return events
