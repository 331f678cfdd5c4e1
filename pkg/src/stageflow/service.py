"""HTTP interface over the dialogue engine.

One engine instance serves all sessions; concurrent turns on the same
session are rejected with 409 rather than queued, so a client can
never interleave two turns' events.  Closed sessions answer 410 to
further messages, and any backend failure surfaces as 502 with the
session's stage preserved.
"""

from __future__ import annotations

import json
import tempfile
import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .config import AppConfig, build_engine
from .errors import (
    BackendUnavailableError,
    ScriptExhaustedError,
    SessionClosedError,
    SessionNotFoundError,
)
from .harness import ABLATION_MODES, default_personas_dir, load_personas, run_eval
from .pipeline import DialogueEngine
from .state import Resource, SessionConfig
from .stages import Stage


class CreateSessionRequest(BaseModel):
    session_id: str | None = None
    resources: list[dict] = []


class MessageRequest(BaseModel):
    text: str


class OverrideRequest(BaseModel):
    stage: str
    operator_note: str


class EvalRequest(BaseModel):
    mode: str = "full"
    personas_dir: str | None = None


class _SessionLocks:
    def __init__(self) -> None:
        self._guard = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}

    def get(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())


def create_app(config: AppConfig | None = None, engine: DialogueEngine | None = None) -> FastAPI:
    config = config or AppConfig()
    engine = engine or build_engine(config)
    app = FastAPI(title="stageflow", docs_url=None, redoc_url=None)
    locks = _SessionLocks()
    app.state.engine = engine

    @app.exception_handler(RequestValidationError)
    def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def _error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"detail": message})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionRequest):
        if body.session_id and engine.has_session(body.session_id):
            return _error(409, f"session {body.session_id} already exists")
        try:
            resources = [Resource.from_dict(r) for r in body.resources]
        except (KeyError, ValueError) as exc:
            return _error(400, f"bad resource entry: {exc}")
        state = engine.create_session(
            SessionConfig(session_id=body.session_id, resources=resources)
        )
        return {"session_id": state.session_id, "stage": state.stage.value}

    @app.post("/v1/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageRequest):
        if not engine.has_session(session_id):
            return _error(404, f"unknown session {session_id}")
        lock = locks.get(session_id)
        if not lock.acquire(blocking=False):
            return _error(409, f"a turn is already in flight for {session_id}")
        try:
            result = engine.handle_message(session_id, body.text)
            return result.to_dict()
        except SessionClosedError:
            return _error(410, f"session {session_id} is closed")
        except ValueError as exc:
            return _error(400, str(exc))
        except (BackendUnavailableError, ScriptExhaustedError) as exc:
            return _error(502, f"model backend unavailable: {exc}")
        finally:
            lock.release()

    @app.get("/v1/sessions/{session_id}/state")
    def get_state(session_id: str):
        try:
            return engine.get_state(session_id).to_dict()
        except SessionNotFoundError:
            return _error(404, f"unknown session {session_id}")

    @app.get("/v1/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        try:
            events = engine.store.load(session_id)
        except SessionNotFoundError:
            return _error(404, f"unknown session {session_id}")
        lines = [
            json.dumps(e.to_record(), sort_keys=True, ensure_ascii=False) for e in events
        ]
        return PlainTextResponse(
            "\n".join(lines) + ("\n" if lines else ""),
            media_type="application/x-ndjson",
        )

    @app.post("/v1/sessions/{session_id}/stage_override")
    def stage_override(session_id: str, body: OverrideRequest):
        if not engine.has_session(session_id):
            return _error(404, f"unknown session {session_id}")
        try:
            stage = Stage(body.stage)
        except ValueError:
            return _error(400, f"unknown stage {body.stage!r}")
        if not body.operator_note.strip():
            return _error(400, "operator_note must be non-empty")
        state = engine.override_stage(session_id, stage, body.operator_note)
        return state.to_dict()

    @app.post("/v1/eval/run")
    def eval_run(body: EvalRequest):
        if body.mode not in ABLATION_MODES:
            return _error(400, f"unknown eval mode {body.mode!r}")
        personas_dir = body.personas_dir or config.personas_dir or default_personas_dir()
        personas = load_personas(personas_dir)
        store_root = tempfile.mkdtemp(prefix="stageflow-eval-")
        _, report = run_eval(personas, store_root, engine.lexicon, body.mode)
        return report.to_dict()

    return app
