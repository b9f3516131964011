"""HTTP + server-sent-events facade over the orchestrator.

The service holds no authoritative state of its own: live sessions belong
to the orchestrator, finished ones are reloaded from their persisted
session.json, so a restart reproduces identical GET responses.
"""

from __future__ import annotations

import json
import queue
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .library import CodeLibrary
from .model import HivegenError
from .orchestrator import GenerationSession, Orchestrator, SessionStatus
from .parsing import ParseError, render_sketch
from .templates import load_builtin_template


class ApiError(Exception):
    def __init__(self, status_code: int, code: str, message: str):
        self.status_code = status_code
        self.code = code
        self.message = message


class CreateSessionRequest(BaseModel):
    prompt: Optional[str] = None
    kernel: Optional[str] = None
    template: Optional[str] = None
    objective: str = "clock"
    strategy: Optional[str] = None
    icl: bool = False
    no_interact: bool = False
    max_clock_ns: Optional[float] = None
    max_power_mw: Optional[float] = None
    max_area_um2: Optional[float] = None


class EditRequest(BaseModel):
    sentence: str


def session_view(session: GenerationSession) -> dict:
    return {
        "id": session.id,
        "mode": session.mode,
        "design": session.design_name,
        "status": session.status.value,
        "failure_stage": session.failure_stage,
        "revision": session.revision,
        "tasks": session.task_statuses(),
        "rounds": [r.to_json() for r in session.rounds],
        "usage": session.usage.to_json(),
        "provenance": dict(session.provenance),
    }


def _view_from_file(data: dict) -> dict:
    tasks = []
    if data.get("tasks"):
        tasks = data["tasks"].get("tasks", [])
    return {
        "id": data["id"],
        "mode": data["mode"],
        "design": data.get("design", "design"),
        "status": data["status"],
        "failure_stage": data.get("failure_stage"),
        "revision": data.get("revision", 0),
        "tasks": tasks,
        "rounds": data.get("rounds", []),
        "usage": data.get("usage", {}),
        "provenance": data.get("provenance", {}),
    }


class SessionHost:
    """Owns live sessions and their worker threads."""

    def __init__(self, orchestrator: Orchestrator):
        self.orchestrator = orchestrator
        self.sessions: dict[str, GenerationSession] = {}
        self._lock = threading.Lock()

    def create(self, req: CreateSessionRequest) -> GenerationSession:
        from .dse import ExplorerState
        from .orchestrator import PpaTarget

        orch = self.orchestrator
        if req.prompt:
            session = orch.new_simple_session(req.prompt)
            starter = lambda: orch.start_session(session, req.prompt)
        elif req.kernel and req.template:
            template = load_builtin_template(req.template)
            target = None
            if req.max_clock_ns is not None or req.max_power_mw is not None or req.max_area_um2 is not None:
                target = PpaTarget(
                    max_power_mw=req.max_power_mw,
                    max_clock_ns=req.max_clock_ns,
                    max_area_um2=req.max_area_um2,
                )
            explorer = ExplorerState(
                objective=req.objective,
                strategy_hint=req.strategy,
                icl_mode="one_shot" if req.icl else "none",
            )
            session = orch.new_template_session(req.kernel, template, explorer, ppa_target=target)
            starter = lambda: orch.start_session(session)
        else:
            raise ApiError(422, "bad_request", "provide either prompt, or kernel and template")
        with self._lock:
            self.sessions[session.id] = session
        starter()
        if req.no_interact and session.status is SessionStatus.AWAITING_USER:
            self._approve_async(session)
        return session

    def _approve_async(self, session: GenerationSession) -> None:
        thread = threading.Thread(target=self.orchestrator.approve_session, args=(session,), daemon=True)
        thread.start()

    def live(self, session_id: str) -> Optional[GenerationSession]:
        with self._lock:
            return self.sessions.get(session_id)

    def view(self, session_id: str) -> dict:
        session = self.live(session_id)
        if session is not None:
            return session_view(session)
        persisted = self._load_persisted(session_id)
        if persisted is not None:
            return _view_from_file(persisted)
        raise ApiError(404, "not_found", f"no session {session_id}")

    def _load_persisted(self, session_id: str) -> Optional[dict]:
        root = self.orchestrator.sessions_dir
        if root is None:
            return None
        path = Path(root) / session_id / "session.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))


def create_app(host: SessionHost, static_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="hivegen", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status_code, content={"code": exc.code, "message": exc.message})

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        session = host.create(req)
        return session_view(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return host.view(session_id)

    @app.get("/sessions/{session_id}/sketch/{module}")
    def get_sketch(session_id: str, module: str):
        session = host.live(session_id)
        if session is None:
            raise ApiError(404, "not_found", f"no live session {session_id}")
        sketch = session.sketches.get(module)
        if sketch is None:
            raise ApiError(404, "not_found", f"no module {module} in session {session_id}")
        block = session.blocks.get(module)
        return {
            "module": module,
            "revision": sketch.revision,
            "text": render_sketch(sketch),
            "instances": [i.to_json() for i in sketch.instance_lines],
            "ports": [p.to_json() for p in sketch.header.ports],
            "body_state": sketch.body_state.value,
            "source": block.source if block else None,
        }

    @app.post("/sessions/{session_id}/edits")
    def post_edit(session_id: str, edit: EditRequest):
        session = host.live(session_id)
        if session is None:
            raise ApiError(404, "not_found", f"no live session {session_id}")
        if session.status is not SessionStatus.AWAITING_USER:
            raise ApiError(409, "conflict", f"session is {session.status.value}, not awaiting_user")
        try:
            tree, command = host.orchestrator.apply_session_edit(session, edit.sentence)
        except ParseError as exc:
            return {"accepted": False, "error": f"{type(exc).__name__}: {exc}"}
        except HivegenError as exc:
            return {"accepted": False, "error": f"{type(exc).__name__}: {exc}"}
        return {
            "accepted": True,
            "command": {"type": type(command).__name__, **command.__dict__}
            if not hasattr(command, "port")
            else {
                "type": type(command).__name__,
                "parent": command.parent,
                "port": command.port.to_json(),
            },
            "ls_tree": tree.to_json(),
            "new_revision": session.revision,
        }

    @app.post("/sessions/{session_id}/approve")
    def approve(session_id: str):
        session = host.live(session_id)
        if session is None:
            raise ApiError(404, "not_found", f"no live session {session_id}")
        if session.status is not SessionStatus.AWAITING_USER:
            raise ApiError(409, "conflict", f"session is {session.status.value}, not awaiting_user")
        host._approve_async(session)
        return {"id": session_id, "status": "running"}

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str):
        session = host.live(session_id)
        if session is None:
            raise ApiError(404, "not_found", f"no live session {session_id}")

        def stream():
            q, backlog = session.events.subscribe()
            last_seq = -1
            try:
                for event in backlog:
                    last_seq = event.seq
                    yield f"event: {event.kind}\ndata: {json.dumps(event.to_json())}\n\n"
                terminal = {SessionStatus.SUCCEEDED.value, SessionStatus.FAILED.value}

                def is_terminal(ev) -> bool:
                    return ev.kind == "status" and ev.payload.get("status") in terminal

                if any(is_terminal(ev) for ev in backlog):
                    return
                while True:
                    try:
                        event = q.get(timeout=30.0)
                    except queue.Empty:
                        yield ": keep-alive\n\n"
                        continue
                    if event.seq <= last_seq:
                        continue
                    last_seq = event.seq
                    yield f"event: {event.kind}\ndata: {json.dumps(event.to_json())}\n\n"
                    if is_terminal(event):
                        return
            finally:
                session.events.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/library")
    def get_library():
        entries = []
        for entry in sorted(host.orchestrator.library.entries(), key=lambda e: e.id):
            entries.append(
                {
                    "id": entry.id,
                    "module_name": entry.module_name,
                    "weight": entry.weight,
                    "second_chance": entry.second_chance,
                    "retrieval_count": entry.retrieval_count,
                    "sibling_skip_count": entry.sibling_skip_count,
                    "gc_marked": entry.gc_marked,
                    "verified": entry.block.verified,
                }
            )
        return {"entries": entries}

    @app.post("/library/gc")
    def run_gc():
        orch = host.orchestrator

        def structural_gate(module_name: str, source: str) -> bool:
            from .model import ModuleSpec
            from .verilog import parse_modules

            try:
                mods = parse_modules(source)
            except HivegenError:
                return False
            return any(m.name == module_name for m in mods)

        report = orch.library.run_gc(orch.backend, verifier=structural_gate)
        return {
            "refined": list(report.refined),
            "removed": list(report.removed),
            "deferred": list(report.deferred),
        }

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def serve(host: SessionHost, port: int = 8787, static_dir: Optional[Path] = None) -> None:
    import uvicorn

    app = create_app(host, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
