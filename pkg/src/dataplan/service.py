"""HTTP service exposing sessions, queries, plans, registries and streams.

Every error is returned as an ApiError JSON body ``{code, message, detail?}``
with the HTTP status the code maps to. Stream delivery is a long-lived
NDJSON channel (one message object per line) with a long-poll mode honoring
``after``, so clients resume with ``after=<last seq>`` and never miss or
duplicate messages.
"""

from __future__ import annotations

import json
import time
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from .engine import Engine
from .errors import ERROR_STATUS, BadRequestError, EngineError
from .planner import DataPlan
from .registry import SourceDescriptor


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="dataplan", version="0.1.0")
    app.state.engine = engine
    # The console is served from a different origin during development.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        status = ERROR_STATUS.get(exc.code, 500)
        return JSONResponse(status_code=status, content=exc.to_payload())

    @app.post("/sessions")
    def create_session():
        session = engine.create_session()
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/query")
    def run_query(session_id: str, body: dict):
        session = engine.sessions.get(session_id)
        question = body.get("question")
        if not question or not isinstance(question, str):
            raise BadRequestError("question is required")
        plan, record = engine.answer_question(session, question, body.get("objective"))
        return {"plan_id": plan.plan_id, "status": record.status}

    @app.get("/sessions/{session_id}/stream")
    def stream(session_id: str, after: int = 0, wait: float = 10.0, follow: bool = False,
               idle: float = 2.0):
        session = engine.sessions.get(session_id)

        def generate():
            cursor = after
            deadline = time.monotonic() + max(0.0, wait)
            sent_any = False
            while True:
                messages = session.messages(after=cursor)
                for message in messages:
                    cursor = message.seq
                    sent_any = True
                    yield json.dumps(message.to_obj(), sort_keys=True) + "\n"
                if follow:
                    if messages:
                        deadline = time.monotonic() + idle
                    elif time.monotonic() > deadline:
                        return
                else:
                    if sent_any or time.monotonic() > deadline:
                        return
                time.sleep(0.02)

        return StreamingResponse(generate(), media_type="application/x-ndjson")

    @app.post("/sessions/{session_id}/answers")
    def post_answer(session_id: str, body: dict):
        session = engine.sessions.get(session_id)
        record = engine.executor.resume_with_answer(session, body.get("prompt_id"), body.get("answer"))
        return {"plan_id": record.plan_id, "status": record.status}

    @app.get("/plans/{plan_id}")
    def get_plan(plan_id: str):
        record = engine.executor.record_for(plan_id)
        plan = engine.executor.plan_for(plan_id)
        return {"plan": plan.to_obj(), "record": record.to_obj()}

    @app.post("/plans/validate")
    def validate_plan(body: dict):
        plan = DataPlan.from_obj(body.get("plan", body))
        report = engine.planner.validate(plan)
        return report.to_obj()

    @app.post("/plans/execute")
    def execute_plan(body: dict):
        plan = DataPlan.from_obj(body.get("plan", body))
        session = engine.sessions.get_or_create(body.get("session_id"))
        record = engine.executor.execute(plan, session, body.get("options"))
        return {
            "plan_id": plan.plan_id,
            "session_id": session.session_id,
            "status": record.status,
            "record": record.to_obj(),
        }

    @app.get("/registry/data")
    def search_registry(query: str = "", level: Optional[str] = None, k: int = 10):
        hits = engine.registry.search_metadata(query, level_filter=level, top_k=k)
        return {"hits": [h.to_obj() for h in hits]}

    @app.post("/registry/data/sources")
    def register_source(body: dict):
        descriptor = SourceDescriptor.from_obj(body)
        engine.registry.register_source(descriptor)
        engine.adapters[descriptor.source_id] = engine._build_adapter(descriptor)
        return {"source_id": descriptor.source_id}

    @app.post("/registry/data/sources/{source_id}/sync")
    def sync_source(source_id: str):
        entries = engine.registry.sync_source(source_id)
        return {"source_id": source_id, "entries": len(entries)}

    @app.get("/registry/data/sources")
    def list_sources():
        return {"sources": [d.to_obj() for d in engine.registry.list_sources()]}

    @app.get("/registry/operators")
    def list_operators():
        return {"operators": [d.to_obj() for d in engine.operators.list_operators()]}

    return app
