"""Configuration loading: YAML files, environment overrides, and
engine wiring from a resolved config."""

from __future__ import annotations

from pathlib import Path

import pytest

from stageflow.config import AppConfig, _deep_merge, build_engine, load_config
from stageflow.errors import ConfigError
from stageflow.gateway import ScriptedBackend
from stageflow.pipeline import DEFAULT_FAREWELL, DEFAULT_REFERRAL

from .helpers import make_raw


def write_script(tmp_path: Path) -> Path:
    path = tmp_path / "script.jsonl"
    path.write_text('{"key": 0, "raw": "hello"}\n', encoding="utf-8")
    return path


def test_defaults():
    config = AppConfig()
    assert config.store_dir == "./sessions"
    assert (config.host, config.port) == ("127.0.0.1", 8470)
    assert config.backend.kind == "scripted"
    assert config.detector.mode == "rules"
    assert config.prompt.thinking and config.prompt.stage_aware and config.prompt.gating
    assert config.referral_text == DEFAULT_REFERRAL
    assert config.farewell_text == DEFAULT_FAREWELL


def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="surprise"):
        AppConfig.from_dict({"surprise": 1})


def test_unknown_nested_field_rejected():
    with pytest.raises(ConfigError):
        AppConfig.from_dict({"detector": {"mood": "rules"}})
    with pytest.raises(ConfigError):
        AppConfig.from_dict({"prompt": {"verbosity": 3}})


def test_null_sections_mean_defaults():
    config = AppConfig.from_dict({"backend": None, "detector": None, "prompt": None})
    assert config.detector.mode == "rules"
    assert config.prompt.thinking is True


def test_load_config_defaults_without_file(tmp_path):
    config = load_config(None, environ={})
    assert config == AppConfig()


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.yaml", environ={})


def test_load_config_invalid_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("host: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="valid YAML"):
        load_config(path, environ={})


def test_load_config_non_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- a\n- b\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(path, environ={})


def test_load_config_empty_file_is_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    assert load_config(path, environ={}) == AppConfig()


def test_env_overrides_typed_and_nested(tmp_path):
    config = load_config(
        None,
        environ={
            "STAGEFLOW_PORT": "9000",
            "STAGEFLOW_BACKEND__KIND": "scripted",
            "STAGEFLOW_PROMPT__THINKING": "false",
            "HOME": "/root",  # unprefixed: ignored
        },
    )
    assert config.port == 9000
    assert config.backend.kind == "scripted"
    assert config.prompt.thinking is False
    assert config.prompt.stage_aware is True


def test_env_overrides_merge_with_file(tmp_path):
    script = write_script(tmp_path)
    path = tmp_path / "app.yaml"
    path.write_text(f"backend:\n  script: {script}\nport: 8001\n", encoding="utf-8")
    config = load_config(path, environ={"STAGEFLOW_BACKEND__TIMEOUT_SECONDS": "2.5"})
    assert config.backend.script == str(script)  # file value survives the merge
    assert config.backend.timeout_seconds == 2.5
    assert config.port == 8001


def test_env_value_that_is_not_yaml_stays_a_string():
    config = load_config(None, environ={"STAGEFLOW_HOST": "[unclosed"})
    assert config.host == "[unclosed"


def test_env_scalar_then_nested_conflict():
    environ = {"STAGEFLOW_BACKEND": "oops", "STAGEFLOW_BACKEND__KIND": "scripted"}
    with pytest.raises(ConfigError, match="conflicts"):
        load_config(None, environ=environ)


def test_deep_merge_nests_and_replaces():
    base = {"a": {"x": 1, "y": 2}, "b": 1}
    extra = {"a": {"y": 3}, "b": {"c": 4}}
    assert _deep_merge(base, extra) == {"a": {"x": 1, "y": 3}, "b": {"c": 4}}
    assert base == {"a": {"x": 1, "y": 2}, "b": 1}  # inputs untouched


def test_build_engine_wires_config(tmp_path):
    script = write_script(tmp_path)
    config = AppConfig.from_dict(
        {
            "store_dir": str(tmp_path / "sessions"),
            "backend": {"script": str(script)},
            "referral_text": "Please call the local crisis line.",
            "farewell_text": "Take care of yourself.",
        }
    )
    engine = build_engine(config)
    assert engine.store.root == tmp_path / "sessions"
    assert isinstance(engine.backend, ScriptedBackend)
    assert engine.referral_text == "Please call the local crisis line."
    assert engine.farewell_text == "Take care of yourself."
    assert engine.detector.gateway is None  # rules mode needs no model


def test_build_engine_hybrid_detector_shares_backend(tmp_path):
    script = write_script(tmp_path)
    config = AppConfig.from_dict(
        {
            "store_dir": str(tmp_path / "sessions"),
            "backend": {"script": str(script)},
            "detector": {"mode": "hybrid"},
        }
    )
    engine = build_engine(config)
    assert engine.detector.gateway is engine.backend


def test_build_engine_custom_lexicon(tmp_path):
    lexicon_path = tmp_path / "lex.yaml"
    lexicon_path.write_text(
        "signals:\n"
        "  ready_for_insight: [why is this]\n"
        "  ready_for_action: [what can i do]\n"
        "  avoidance_detected: [rather not]\n"
        "  resistance_to_advice: [tried that]\n"
        "  crisis_resolved: [i am safe]\n"
        "  new_topic: [different subject]\n"
        "  closure_signal: [farewell]\n"
        "crisis:\n"
        "  - {pattern: crisis word, match: substring, weight: 1.0}\n",
        encoding="utf-8",
    )
    script = write_script(tmp_path)
    config = AppConfig.from_dict(
        {
            "store_dir": str(tmp_path / "sessions"),
            "backend": {"script": str(script)},
            "lexicon_path": str(lexicon_path),
        }
    )
    engine = build_engine(config)
    from stageflow.stages import Signal

    patterns = [p.pattern for p in engine.lexicon.signal_patterns[Signal.CRISIS_TRIGGER]]
    assert patterns == ["crisis word"]


def test_example_config_at_repo_root_loads():
    example = Path(__file__).resolve().parents[1] / "config.example.yaml"
    config = load_config(example, environ={})
    assert config.store_dir
    assert config.backend.kind in ("scripted", "remote")
