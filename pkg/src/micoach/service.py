"""HTTP session service over the engine, store, and script tooling.

JSON errors use ``{code, message, location?}``. Adherence tags are stripped
at the serialization boundary: trainee endpoints never see them, while the
admin export preserves the full event stream. Admin endpoints (script
upload, export) check a static bearer token when one is configured via the
``MICOACH_ADMIN_TOKEN`` environment variable or the app factory.
"""

from __future__ import annotations

import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .engine import (
    AWAITING_CHOICE,
    MODES,
    EngineConfig,
    EngineError,
    SessionState,
    advance,
    session_progress,
    start_session,
)
from .events import MENU_SHOWN, TurnEvent
from .script import ParseError, ScriptAST, parse, validate
from .store import SessionStore, StoreError

ADMIN_TOKEN_ENV = "MICOACH_ADMIN_TOKEN"


def _now_ms() -> int:
    return int(time.time() * 1000)


def _error(status: int, code: str, message: str, location: str | None = None) -> JSONResponse:
    body = {"code": code, "message": message}
    if location is not None:
        body["location"] = location
    return JSONResponse(status_code=status, content=body)


def _trainee_events(events: list[TurnEvent]) -> list[dict]:
    return [e.to_dict(trainee_facing=True) for e in events]


@dataclass
class _LiveSession:
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    # idempotency memo: menu seq answered -> (option_id, response events)
    last_choice: tuple[int, str, list[dict]] | None = None


class _Runtime:
    def __init__(self, script: ScriptAST, store: SessionStore):
        self.script = script
        self.store = store
        self.sessions: dict[str, _LiveSession] = {}
        self.lock = threading.Lock()

    def get(self, session_id: str) -> _LiveSession | None:
        with self.lock:
            live = self.sessions.get(session_id)
        if live is not None:
            return live
        if not self.store.has_session(session_id):
            return None
        state, _log = self.store.load_session(session_id)
        with self.lock:
            return self.sessions.setdefault(session_id, _LiveSession(state=state))

    def put(self, session_id: str, state: SessionState) -> _LiveSession:
        live = _LiveSession(state=state)
        with self.lock:
            self.sessions[session_id] = live
        return live


def create_app(
    script: ScriptAST,
    data_dir: str | Path,
    admin_token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    report = validate(script)
    if not report.ok:
        raise ValueError("refusing to serve an invalid script:\n" + report.render())
    if admin_token is None:
        admin_token = os.environ.get(ADMIN_TOKEN_ENV)

    app = FastAPI(title="micoach", docs_url=None, redoc_url=None)
    runtime = _Runtime(script, SessionStore(data_dir, script))

    def admin_guard(request: Request) -> JSONResponse | None:
        if not admin_token:
            return None  # desk-scale default: no token configured, no gate
        header = request.headers.get("authorization", "")
        if header != f"Bearer {admin_token}":
            return _error(401, "UNAUTHORIZED", "admin token required")
        return None

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/sessions", status_code=201)
    async def create_session(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "BAD_REQUEST", "body must be JSON")
        mode = body.get("mode")
        if mode not in MODES:
            return _error(400, "INVALID_MODE", f"mode must be one of {', '.join(MODES)}")
        bindings = body.get("bindings") or {}
        if not isinstance(bindings, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in bindings.items()
        ):
            return _error(400, "INVALID_BINDINGS", "bindings must map strings to strings")
        user_id = body.get("user_id") or "anonymous"

        session_id = secrets.token_urlsafe(16)
        try:
            state, events = start_session(
                script, mode, bindings, EngineConfig(session_id=session_id)
            )
        except EngineError as exc:
            if exc.code == "MISSING_BINDING":
                return _error(400, exc.code, exc.message)
            if exc.code == "UNVALIDATED_SCRIPT":
                return _error(422, exc.code, exc.message)
            return _error(400, exc.code, exc.message)

        try:
            runtime.store.create_user(user_id, bindings, _now_ms())
        except StoreError:
            pass  # known user
        runtime.store.create_session(session_id, user_id, mode, bindings, _now_ms())
        for event in events:
            runtime.store.append_event(session_id, _now_ms(), event)
        runtime.put(session_id, state)
        return JSONResponse(
            status_code=201,
            content={
                "session_id": session_id,
                "status": state.status,
                "events": _trainee_events(events),
            },
        )

    @app.get("/api/sessions/{session_id}/turn")
    def turn(session_id: str, after: int = 0):
        live = runtime.get(session_id)
        if live is None:
            return _error(404, "UNKNOWN_SESSION", f"no session '{session_id}'")
        with live.lock:
            log = runtime.store.load_log(session_id)
            events = [e.to_dict(trainee_facing=True) for e in log.events if e.seq > after]
            options = []
            if live.state.status == AWAITING_CHOICE:
                last_menu = next(
                    (e for e in reversed(log.events) if e.kind == MENU_SHOWN), None
                )
                if last_menu is not None:
                    options = [
                        {"id": oid, "label": label} for oid, label in last_menu.options or ()
                    ]
            return {"status": live.state.status, "events": events, "options": options}

    @app.post("/api/sessions/{session_id}/choice")
    async def choice(session_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "BAD_REQUEST", "body must be JSON")
        option_id = body.get("option_id")
        if not isinstance(option_id, str):
            return _error(400, "UNKNOWN_OPTION", "option_id is required")
        menu_seq = body.get("seq")

        live = runtime.get(session_id)
        if live is None:
            return _error(404, "UNKNOWN_SESSION", f"no session '{session_id}'")
        with live.lock:
            # Retry of an already-answered menu: same answer, same response.
            if live.last_choice is not None:
                answered_seq, answered_option, payload = live.last_choice
                retry_of_last = menu_seq == answered_seq or (
                    menu_seq is None and not _option_displayed(live.state, option_id)
                )
                if retry_of_last:
                    if option_id == answered_option:
                        return {"events": payload}
                    return _error(409, "CHOICE_NOT_EXPECTED", "menu was already answered differently")
            if live.state.status != AWAITING_CHOICE:
                return _error(409, "CHOICE_NOT_EXPECTED", f"session is {live.state.status}")
            current_seq = live.state.next_seq - 1  # seq of the displayed MenuShown
            if menu_seq is not None and menu_seq != current_seq:
                return _error(409, "CHOICE_NOT_EXPECTED", "choice references a stale menu")
            try:
                state, events = advance(live.state, option_id)
            except EngineError as exc:
                if exc.code == "UNKNOWN_OPTION":
                    return _error(400, exc.code, exc.message)
                if exc.code in ("CHOICE_NOT_EXPECTED", "ENGINE_HALTED"):
                    return _error(409, exc.code, exc.message)
                return _error(400, exc.code, exc.message)
            for event in events:
                runtime.store.append_event(session_id, _now_ms(), event)
            payload = _trainee_events(events)
            live.state = state
            live.last_choice = (current_seq, option_id, payload)
            return {"events": payload}

    @app.get("/api/sessions/{session_id}/progress")
    def progress(session_id: str):
        live = runtime.get(session_id)
        if live is None:
            return _error(404, "UNKNOWN_SESSION", f"no session '{session_id}'")
        with live.lock:
            view = session_progress(live.state).to_dict()
            view["status"] = live.state.status
            return view

    @app.get("/api/sessions/{session_id}/export")
    def export(session_id: str, request: Request, format: str = "jsonl"):
        denied = admin_guard(request)
        if denied is not None:
            return denied
        if format not in ("jsonl", "csv"):
            return _error(400, "BAD_FORMAT", "format must be jsonl or csv")
        try:
            data = runtime.store.export_events(session_id, format)
        except StoreError as exc:
            if exc.code == "UNKNOWN_SESSION":
                return _error(404, exc.code, exc.message)
            raise
        media = "application/x-ndjson" if format == "jsonl" else "text/csv"
        return Response(content=data, media_type=media)

    @app.post("/api/scripts")
    async def upload_script(request: Request, file: UploadFile):
        denied = admin_guard(request)
        if denied is not None:
            return denied
        raw = (await file.read()).decode("utf-8", errors="replace")
        try:
            ast = parse(raw)
        except ParseError as exc:
            return JSONResponse(
                status_code=422,
                content={
                    "code": "PARSE_ERROR",
                    "message": exc.message,
                    "location": f"{exc.line}:{exc.col}",
                },
            )
        script_report = validate(ast)
        body = {
            "errors": [
                {"code": e.code, "location": e.location, "message": e.message}
                for e in script_report.errors
            ],
            "warnings": [
                {"code": w.code, "location": w.location, "message": w.message}
                for w in script_report.warnings
            ],
        }
        return JSONResponse(status_code=200 if script_report.ok else 422, content=body)

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _option_displayed(state: SessionState, option_id: str) -> bool:
    from .engine import pending_menu

    pending = pending_menu(state)
    if pending is None:
        return False
    _seg, menu = pending
    return any(o.id == option_id for o in menu.options)
