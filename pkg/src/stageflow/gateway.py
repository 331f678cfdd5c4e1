"""Model backends behind one completion interface.

``ScriptedBackend`` serves canned responses for offline runs: entries
are keyed by call ordinal (the nth completion of a session) with a
prompt-digest fallback, and a miss raises ``ScriptExhaustedError``
rather than inventing text.

``RemoteBackend`` speaks the chat-completions wire shape over HTTP with
bounded retries: timeouts, connection errors, and 5xx responses are
retried with exponential backoff; client errors fail fast.  The API
key is read from a named environment variable at request time and
never logged or echoed in errors.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import requests

from .errors import BackendUnavailableError, ConfigError, ScriptExhaustedError

logger = logging.getLogger(__name__)


@dataclass
class BackendConfig:
    kind: str = "scripted"
    script: str = ""
    base_url: str = ""
    model: str = ""
    api_key_env: str = ""
    timeout_seconds: float = 10.0
    max_retries: int = 2
    backoff_base_ms: int = 500
    backoff_factor: float = 2.0
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "remote"):
            raise ConfigError(f"unknown backend kind: {self.kind!r}")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        if self.timeout_seconds <= 0:
            raise ConfigError("timeout_seconds must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        return cls(**known)


class CompletionBackend(Protocol):
    def complete(self, messages: list[dict], key: int | None = None) -> str: ...


def prompt_digest(messages: list[dict]) -> str:
    canonical = json.dumps(messages, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class ScriptedBackend:
    by_key: dict[int, str] = field(default_factory=dict)
    by_digest: dict[str, str] = field(default_factory=dict)
    calls: list[int | None] = field(default_factory=list)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        by_key: dict[int, str] = {}
        by_digest: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if "key" in entry:
                    by_key[int(entry["key"])] = entry["raw"]
                elif "digest" in entry:
                    by_digest[entry["digest"]] = entry["raw"]
                else:
                    raise ConfigError(f"script entry needs 'key' or 'digest': {entry}")
        return cls(by_key=by_key, by_digest=by_digest)

    def complete(self, messages: list[dict], key: int | None = None) -> str:
        self.calls.append(key)
        if key is not None and key in self.by_key:
            return self.by_key[key]
        digest = prompt_digest(messages)
        if digest in self.by_digest:
            return self.by_digest[digest]
        raise ScriptExhaustedError(f"key={key} digest={digest[:12]}")


class RemoteBackend:
    """Chat-completions client with bounded retries.

    ``sleep`` is injectable so retry timing can be tested without real
    waiting.  Worst-case latency is bounded by
    (max_retries + 1) * timeout plus the backoff sum.
    """

    def __init__(self, config: BackendConfig, sleep: Callable[[float], None] = time.sleep):
        if not config.base_url:
            raise ConfigError("remote backend requires base_url")
        self.config = config
        self._sleep = sleep

    def __repr__(self) -> str:
        return f"RemoteBackend(base_url={self.config.base_url!r}, model={self.config.model!r})"

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, messages: list[dict], key: int | None = None) -> str:
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": cfg.model,
            "messages": messages,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }
        attempts = cfg.max_retries + 1
        last_error = ""
        for attempt in range(attempts):
            if attempt:
                delay = (cfg.backoff_base_ms / 1000.0) * (cfg.backoff_factor ** (attempt - 1))
                self._sleep(delay)
            try:
                response = requests.post(
                    url, json=body, headers=self._headers(), timeout=cfg.timeout_seconds
                )
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = type(exc).__name__
                logger.warning("backend attempt %d/%d failed: %s", attempt + 1, attempts, last_error)
                continue
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                logger.warning("backend attempt %d/%d failed: %s", attempt + 1, attempts, last_error)
                continue
            if response.status_code >= 400:
                raise BackendUnavailableError(attempt + 1, f"HTTP {response.status_code}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise BackendUnavailableError(attempt + 1, "malformed completion body") from None
        raise BackendUnavailableError(attempts, last_error)


def make_backend(config: BackendConfig, sleep: Callable[[float], None] = time.sleep):
    if config.kind == "remote":
        return RemoteBackend(config, sleep=sleep)
    if not config.script:
        raise ConfigError("scripted backend requires a script path")
    path = Path(config.script)
    if not path.is_absolute():
        from importlib.resources import files

        bundled = files("stageflow") / "data" / "scripts" / config.script
        if bundled.is_file():
            return ScriptedBackend.from_file(str(bundled))
    return ScriptedBackend.from_file(path)
