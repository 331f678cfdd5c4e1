"""Clocks for event timestamps.

The service stamps events with wall-clock time; evaluation runs use a
fixed-step clock so scripted dialogues serialize byte-identically
across runs.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone


class SystemClock:
    def now_rfc3339(self) -> str:
        return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


class FixedStepClock:
    """Deterministic clock: advances one second per call from a fixed base."""

    def __init__(self, base: str = "2026-01-01T00:00:00Z", step_seconds: int = 1):
        self._base = datetime.fromisoformat(base.replace("Z", "+00:00"))
        self._step = timedelta(seconds=step_seconds)
        self._ticks = 0

    def now_rfc3339(self) -> str:
        stamp = self._base + self._ticks * self._step
        self._ticks += 1
        return stamp.isoformat().replace("+00:00", "Z")
