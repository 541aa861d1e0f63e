"""Long-running session service: HTTP commands plus a server-push event
stream for questions and grid updates.

Sessions are independent; one turn is in flight per session at a time.
Every turn is appended to a JSON-lines log, and replaying a log through
the deterministic backend reproduces the recorded grid byte-for-byte.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .backends import BackendConfig, make_backend
from .grammar import ordinal
from .memory import ShapeMemory
from .pipeline import Pipeline, SessionContext, TurnOutcome


class CorruptLog(Exception):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        super().__init__(f"corrupt dialogue log at line {line_no}: {reason}")


class BadConfig(Exception):
    pass


@dataclass
class ServiceConfig:
    data_dir: Path = Path("./data")
    backend: BackendConfig = field(default_factory=BackendConfig)
    shape_library: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        raw = json.loads(Path(path).read_text())
        return cls(
            data_dir=Path(raw.get("data_dir", "./data")),
            backend=BackendConfig.from_dict(raw.get("backend", {})),
            shape_library=raw.get("shape_library"),
        )


@dataclass
class SessionRecord:
    session_id: str
    created_at: float
    ctx: SessionContext
    log_path: Path
    events: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def emit(self, event_type: str, data: dict) -> None:
        self.events.append({"seq": len(self.events), "type": event_type, "data": data})


class SessionService:
    def __init__(self, config: ServiceConfig | None = None):
        self.config = config or ServiceConfig()
        self.config.data_dir.mkdir(parents=True, exist_ok=True)
        self.sessions_dir = self.config.data_dir / "sessions"
        self.sessions_dir.mkdir(exist_ok=True)
        self.pipeline = Pipeline(backend=make_backend(self.config.backend))
        self.shared_shapes = self._load_shared_library()
        self.sessions: dict[str, SessionRecord] = {}

    def _load_shared_library(self) -> ShapeMemory:
        if self.config.shape_library is None:
            return ShapeMemory()
        path = Path(self.config.shape_library)
        if not path.exists():
            raise BadConfig(f"shape library file not found: {path}")
        return ShapeMemory.load(path)

    # -- session lifecycle ---------------------------------------------------

    def create_session(self, shape_library: str | None = None) -> SessionRecord:
        memory = ShapeMemory()
        if shape_library is not None:
            path = Path(shape_library)
            if not path.exists():
                raise BadConfig(f"shape library file not found: {path}")
            memory = ShapeMemory.load(path)
        elif self.config.shape_library is not None:
            memory = self._load_shared_library()

        session_id = secrets.token_hex(8)
        record = SessionRecord(
            session_id=session_id,
            created_at=time.time(),
            ctx=self.pipeline.new_session(memory=memory),
            log_path=self.sessions_dir / f"{session_id}.jsonl",
        )
        self.sessions[session_id] = record
        return record

    def get(self, session_id: str) -> SessionRecord:
        if session_id not in self.sessions:
            raise KeyError(session_id)
        return self.sessions[session_id]

    # -- turns -----------------------------------------------------------------

    def post_instruction(self, session_id: str, text: str) -> TurnOutcome:
        record = self.get(session_id)
        if not record.lock.acquire(blocking=False):
            raise BlockingIOError("turn in flight")
        try:
            if record.ctx.pending is not None:
                raise BlockingIOError("awaiting an answer to a clarification question")
            return self._run_turn(record, text)
        finally:
            record.lock.release()

    def post_answer(self, session_id: str, text: str) -> TurnOutcome:
        record = self.get(session_id)
        if not record.lock.acquire(blocking=False):
            raise BlockingIOError("turn in flight")
        try:
            if record.ctx.pending is None:
                raise LookupError("no clarification question pending")
            return self._run_turn(record, text)
        finally:
            record.lock.release()

    def _run_turn(self, record: SessionRecord, text: str) -> TurnOutcome:
        record.emit("instruction", {"text": text})
        log_start = len(record.ctx.dialogue)
        outcome = self.pipeline.process_turn(record.ctx, text)
        for entry in record.ctx.dialogue[log_start:]:
            with open(record.log_path, "a") as fh:
                fh.write(json.dumps(entry, default=str, separators=(",", ":")) + "\n")
        if outcome.kind == "clarify":
            record.emit("question", {"question": outcome.question, "question_id": outcome.question_id})
        elif outcome.kind == "execute":
            record.emit(
                "grid-update",
                {
                    "actions": outcome.actions,
                    "stored": outcome.stored_names,
                    "grid": record.ctx.grid.snapshot(),
                },
            )
        elif outcome.kind == "stored":
            record.emit("stored", {"names": outcome.stored_names})
        else:
            record.emit("error", {"message": outcome.error})
        return outcome

    def state(self, session_id: str) -> dict:
        record = self.get(session_id)
        with record.lock:
            return {
                "session_id": session_id,
                "created_at": record.created_at,
                "grid": record.ctx.grid.snapshot(),
                "dialogue": list(record.ctx.dialogue),
                "shapes": record.ctx.memory.listing(),
                "pending_question": (
                    {
                        "question": record.ctx.pending.current_question,
                        "question_id": record.ctx.pending.current_question_id,
                    }
                    if record.ctx.pending is not None and record.ctx.pending.current_question
                    else None
                ),
            }

    def events_after(self, session_id: str, after: int) -> list[dict]:
        record = self.get(session_id)
        return [e for e in record.events if e["seq"] > after]

    # -- replay ------------------------------------------------------------------

    def replay_log(self, log_path: str | Path) -> dict:
        """Re-runs the architect turns of a recorded dialogue on a fresh
        session and returns the final grid snapshot."""
        texts = read_architect_turns(log_path)
        ctx = self.pipeline.new_session()
        for text in texts:
            self.pipeline.process_turn(ctx, text)
        return {"grid": ctx.grid.snapshot(), "snapshot_json": ctx.grid.snapshot_json()}

    def recover_sessions(self) -> int:
        """Rebuilds sessions from persisted logs (crash recovery)."""
        count = 0
        for log_path in sorted(self.sessions_dir.glob("*.jsonl")):
            session_id = log_path.stem
            if session_id in self.sessions:
                continue
            ctx = self.pipeline.new_session()
            for text in read_architect_turns(log_path):
                self.pipeline.process_turn(ctx, text)
            self.sessions[session_id] = SessionRecord(
                session_id=session_id,
                created_at=log_path.stat().st_mtime,
                ctx=ctx,
                log_path=log_path,
            )
            count += 1
        return count


def read_architect_turns(log_path: str | Path) -> list[str]:
    path = Path(log_path)
    if not path.exists():
        raise CorruptLog(0, "file not found")
    texts = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as err:
            raise CorruptLog(line_no, str(err))
        if "role" not in entry or "text" not in entry:
            raise CorruptLog(line_no, "missing role/text")
        if entry["role"] == "architect":
            texts.append(entry["text"])
    return texts


# --- HTTP layer -----------------------------------------------------------------


class CreateSessionBody(BaseModel):
    shape_library: str | None = None


class TurnBody(BaseModel):
    text: str


class ApplyShapeBody(BaseModel):
    session_id: str
    x: int
    y: int
    color: str | None = None
    part: str | None = None
    size: float | None = None


def _size_phrase(size: float) -> str:
    if size == 2.0:
        return " twice as big"
    if size == 0.5:
        return " half the size"
    if size == int(size) and size > 1:
        from .grammar import CARDINAL_WORDS

        words = {v: k for k, v in CARDINAL_WORDS.items()}
        return f" {words.get(int(size), int(size))} times as big"
    raise ValueError(f"unsupported size factor {size}")


def create_app(config: ServiceConfig | None = None, service: SessionService | None = None) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    service = service or SessionService(config)
    app = FastAPI(title="coblock session service")
    app.state.service = service
    # the console may be served from a different origin during development
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _get(session_id: str) -> SessionRecord:
        try:
            return service.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="session not found")

    @app.post("/sessions")
    def create_session(body: CreateSessionBody | None = None):
        try:
            record = service.create_session(body.shape_library if body else None)
        except BadConfig as err:
            raise HTTPException(status_code=400, detail=str(err))
        return {"session_id": record.session_id, "grid": record.ctx.grid.snapshot()}

    @app.post("/sessions/{session_id}/instruction")
    def post_instruction(session_id: str, body: TurnBody):
        _get(session_id)
        try:
            outcome = service.post_instruction(session_id, body.text)
        except BlockingIOError as err:
            raise HTTPException(status_code=409, detail=f"session busy: {err}")
        return outcome.to_json()

    @app.post("/sessions/{session_id}/answer")
    def post_answer(session_id: str, body: TurnBody):
        _get(session_id)
        try:
            outcome = service.post_answer(session_id, body.text)
        except BlockingIOError as err:
            raise HTTPException(status_code=409, detail=f"session busy: {err}")
        except LookupError as err:
            raise HTTPException(status_code=409, detail=str(err))
        return outcome.to_json()

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        _get(session_id)
        return service.state(session_id)

    @app.get("/sessions/{session_id}/events/poll")
    def poll_events(session_id: str, after: int = -1):
        _get(session_id)
        return {"events": service.events_after(session_id, after)}

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str, after: int = -1, idle_timeout: float = 30.0):
        record = _get(session_id)

        def generate():
            cursor = after
            idle = 0.0
            while idle < idle_timeout:
                new_events = [e for e in record.events if e["seq"] > cursor]
                if new_events:
                    idle = 0.0
                    for event in new_events:
                        cursor = event["seq"]
                        payload = json.dumps(event["data"], separators=(",", ":"))
                        yield f"id: {event['seq']}\nevent: {event['type']}\ndata: {payload}\n\n"
                else:
                    time.sleep(0.1)
                    idle += 0.1
                    if int(idle * 10) % 50 == 0:
                        yield ": heartbeat\n\n"

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/shapes")
    def list_shapes(session_id: str | None = None):
        if session_id:
            record = _get(session_id)
            return {"shapes": record.ctx.memory.listing()}
        return {"shapes": service.shared_shapes.listing()}

    @app.post("/shapes/{name}/apply")
    def apply_shape(name: str, body: ApplyShapeBody):
        record = _get(body.session_id)
        text = f"Make me another {name} at the {ordinal(body.x)} column, {ordinal(body.y)} row"
        if body.color:
            text += f" in {body.color}"
        if body.part:
            text += f" with {body.part.replace('-', ' ')}s"
        if body.size:
            try:
                text += "," + _size_phrase(body.size)
            except ValueError as err:
                raise HTTPException(status_code=400, detail=str(err))
        text += "."
        try:
            outcome = service.post_instruction(body.session_id, text)
        except BlockingIOError as err:
            raise HTTPException(status_code=409, detail=f"session busy: {err}")
        return outcome.to_json()

    @app.get("/healthz")
    def health():
        return {"ok": True, "sessions": len(service.sessions)}

    frontend_dist = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend_dist.exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dist, html=True), name="ui")

    return app
