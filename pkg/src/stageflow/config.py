"""Application configuration: YAML file plus environment overrides.

Environment variables prefixed ``STAGEFLOW_`` override file values;
a double underscore descends one level, so ``STAGEFLOW_BACKEND__KIND``
sets ``backend.kind``.  Values are parsed as YAML scalars, which keeps
numbers and booleans typed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .detector import CueLexicon, DetectorConfig, SignalDetector
from .errors import ConfigError
from .gateway import BackendConfig, make_backend
from .pipeline import DEFAULT_FAREWELL, DEFAULT_REFERRAL, DialogueEngine
from .prompts import PromptConfig, PromptTemplates
from .store import EventStore

ENV_PREFIX = "STAGEFLOW_"

_TOP_LEVEL_KEYS = {
    "store_dir",
    "host",
    "port",
    "backend",
    "detector",
    "prompt",
    "referral_text",
    "farewell_text",
    "lexicon_path",
    "personas_dir",
}


@dataclass
class AppConfig:
    store_dir: str = "./sessions"
    host: str = "127.0.0.1"
    port: int = 8470
    backend: BackendConfig = field(default_factory=lambda: BackendConfig(script="demo_agent.jsonl"))
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    referral_text: str = DEFAULT_REFERRAL
    farewell_text: str = DEFAULT_FAREWELL
    lexicon_path: str = ""
    personas_dir: str = ""

    @classmethod
    def from_dict(cls, data: dict) -> "AppConfig":
        unknown = set(data) - _TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        for key in ("store_dir", "host", "referral_text", "farewell_text", "lexicon_path", "personas_dir"):
            if key in data:
                kwargs[key] = str(data[key])
        if "port" in data:
            kwargs["port"] = int(data["port"])
        try:
            if "backend" in data:
                kwargs["backend"] = BackendConfig.from_dict(data["backend"] or {})
            if "detector" in data:
                kwargs["detector"] = DetectorConfig(**(data["detector"] or {}))
            if "prompt" in data:
                kwargs["prompt"] = PromptConfig(**(data["prompt"] or {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cls(**kwargs)


def _env_overrides(environ: dict) -> dict:
    tree: dict = {}
    for key, value in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX) :].lower().split("__")
        node = tree
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override conflicts at {key}")
        try:
            node[path[-1]] = yaml.safe_load(value)
        except yaml.YAMLError:
            node[path[-1]] = value
    return tree


def _deep_merge(base: dict, extra: dict) -> dict:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path | None = None, environ: dict | None = None) -> AppConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file is not valid YAML: {exc}") from None
        if loaded is not None:
            if not isinstance(loaded, dict):
                raise ConfigError("config file must contain a mapping")
            data = loaded
    overrides = _env_overrides(os.environ if environ is None else environ)
    return AppConfig.from_dict(_deep_merge(data, overrides))


def build_engine(config: AppConfig, clock=None) -> DialogueEngine:
    lexicon = (
        CueLexicon.load(config.lexicon_path) if config.lexicon_path else CueLexicon.load_default()
    )
    backend = make_backend(config.backend)
    detector = SignalDetector(
        lexicon,
        config.detector,
        gateway=backend if config.detector.mode in ("llm", "hybrid") else None,
    )
    return DialogueEngine(
        store=EventStore(Path(config.store_dir)),
        backend=backend,
        detector=detector,
        lexicon=lexicon,
        prompt_config=config.prompt,
        templates=PromptTemplates.load_default(),
        clock=clock,
        referral_text=config.referral_text,
        farewell_text=config.farewell_text,
    )
