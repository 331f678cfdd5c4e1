"""Command-line entry points.

Exit codes: 0 success, 1 usage or runtime error, 2 configuration
error, 3 model backend unavailable.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

import click

from .config import load_config, build_engine
from .clock import FixedStepClock
from .errors import (
    BackendUnavailableError,
    ConfigError,
    ScriptExhaustedError,
    StageflowError,
)
from .harness import ABLATION_MODES, load_personas, default_personas_dir, run_ablation, run_eval
from .state import SessionConfig, replay
from .store import read_events


@click.group()
def cli() -> None:
    """Stage-aware emotional support dialogue engine."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--session", "session_id", default=None, help="Resume or name a session.")
@click.option("--show-thinking", is_flag=True, help="Print the agent's private reasoning.")
def chat(config_path, session_id, show_thinking) -> None:
    """Interactive chat on stdin/stdout."""
    config = load_config(config_path)
    engine = build_engine(config)
    if session_id and engine.has_session(session_id):
        state = engine.get_state(session_id)
    else:
        state = engine.create_session(SessionConfig(session_id=session_id))
    click.echo(f"session {state.session_id} [{state.stage.value}]")
    for line in sys.stdin:
        text = line.strip()
        if not text:
            continue
        if text in ("/quit", "/exit"):
            break
        result = engine.handle_message(state.session_id, text)
        if show_thinking and result.reasoning_chain:
            click.echo(f"(thinking) {result.reasoning_chain}")
        click.echo(f"[{result.stage_after.value}] {result.reply}")
        if result.closed:
            break


@cli.command(name="eval")
@click.option("--personas", "personas_dir", type=click.Path(), default=None, help="Directory of persona YAML files.")
@click.option("--ablate", type=click.Choice(["stage", "thinking", "both"]), default=None, help="Also run with a capability removed and report the delta.")
@click.option("--store", "store_dir", type=click.Path(), default=None, help="Where to write event logs (default: temp dir).")
def eval_cmd(personas_dir, ablate, store_dir) -> None:
    """Run scripted-persona evaluations and print a metrics report."""
    personas = load_personas(personas_dir or default_personas_dir())
    root = store_dir or tempfile.mkdtemp(prefix="stageflow-eval-")
    if ablate:
        report = run_ablation(personas, root, modes=("full", ablate))
        click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        _, report = run_eval(personas, root)
        click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))


@cli.command(name="replay")
@click.argument("event_log", type=click.Path(exists=True, dir_okay=False))
def replay_cmd(event_log) -> None:
    """Rebuild session state from an event log and print it."""
    events = read_events(Path(event_log))
    state = replay(events)
    click.echo(state.serialized())


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    config = load_config(config_path)
    app = create_app(config)
    uvicorn.run(app, host=host or config.host, port=port or config.port, log_level="warning")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.exceptions.ClickException as exc:
        exc.show()
        return 1
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return 2
    except (BackendUnavailableError, ScriptExhaustedError) as exc:
        click.echo(f"backend error: {exc}", err=True)
        return 3
    except StageflowError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
