"""Exception types shared across the package."""

from __future__ import annotations


class StageflowError(Exception):
    """Base class for package errors."""


class ConfigError(StageflowError):
    """Bad or missing configuration."""


class EventOrderingError(StageflowError):
    """An event arrived out of order for its session log."""


class InvalidEventError(StageflowError):
    """An event payload violates the reducer's rules."""


class SessionNotFoundError(StageflowError):
    def __init__(self, session_id: str):
        super().__init__(f"unknown session: {session_id}")
        self.session_id = session_id


class SessionClosedError(StageflowError):
    def __init__(self, session_id: str):
        super().__init__(f"session is closed: {session_id}")
        self.session_id = session_id


class TurnInFlightError(StageflowError):
    """A second message arrived while a turn was still being handled."""

    def __init__(self, session_id: str):
        super().__init__(f"turn already in flight for session: {session_id}")
        self.session_id = session_id


class BackendUnavailableError(StageflowError):
    """The model backend failed after exhausting all retry attempts."""

    def __init__(self, attempts: int, last_error: str = ""):
        detail = f" ({last_error})" if last_error else ""
        super().__init__(f"backend unavailable after {attempts} attempts{detail}")
        self.attempts = attempts
        self.last_error = last_error


class ScriptExhaustedError(StageflowError):
    """A scripted backend had no entry for the requested key."""

    def __init__(self, key: object):
        super().__init__(f"no scripted response for key: {key!r}")
        self.key = key
