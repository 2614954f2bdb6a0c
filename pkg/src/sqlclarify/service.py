"""HTTP surface of the repair loop.

Endpoints mirror the session state machine one to one; every response body
is the same session view the UI renders, and errors always carry
{code, message}. The /encode route exposes the builtin encoder under the
external-encoder contract, so one service can encode for another.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import sql_ir
from .encoder import encode
from .errors import ClarifyError, ConfigError, GatewayError, SessionError
from .orchestrator import Runtime, Session, SessionStore, start_session, submit_answer
from .question_gen import Answer


class CreateSessionBody(BaseModel):
    question: str
    db_id: str


class AnswerBody(BaseModel):
    question_ref: int
    option_index: int


class EncodeBody(BaseModel):
    tokens_x: list[str]
    tokens_x_prime: list[str]


def session_view(session: Session) -> dict:
    current = session.current_question()
    return {
        "id": session.id,
        "db_id": session.db_id,
        "phase": session.phase,
        "question": session.question,
        "sql_before": sql_ir.to_sql_text(session.sql_before),
        "progress": {
            "answered": len(session.answers),
            "total": len(session.answers) + len(session.pending),
        },
        "current_question": _question_view(current) if current else None,
        "answers": [
            {
                "question_ref": q.token_index,
                "token": q.token_surface,
                "option_index": a.option_index,
                "surface": q.options[a.option_index].surface,
                "kind": q.options[a.option_index].kind,
            }
            for q, a in session.answers
        ],
        "modified_question": session.modified_question,
        "sql_after": sql_ir.to_sql_text(session.sql_after) if session.sql_after else None,
    }


def _question_view(question) -> dict:
    return {
        "ref": question.token_index,
        "token": question.token_surface,
        "prompt": question.prompt,
        "options": [{"surface": o.surface, "kind": o.kind} for o in question.options],
    }


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(runtime: Runtime, store: SessionStore | None = None, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="sqlclarify", docs_url=None, redoc_url=None)
    store = store if store is not None else SessionStore()

    @app.exception_handler(ClarifyError)
    async def clarify_error_handler(request: Request, exc: ClarifyError):
        if isinstance(exc, SessionError):
            status = 404 if "unknown or expired" in str(exc) else 409
            return _error(status, "session_error", str(exc))
        if isinstance(exc, GatewayError):
            return _error(502, "gateway_error", str(exc))
        if isinstance(exc, ConfigError):
            return _error(500, "config_error", str(exc))
        return _error(400, "bad_request", str(exc))

    @app.get("/schemas")
    def get_schemas():
        return {
            "schemas": [
                {
                    "db_id": s.db_id,
                    "tables": [
                        {
                            "name": t.name,
                            "columns": [{"name": c.name, "type": c.value_type} for c in t.columns],
                        }
                        for t in s.tables
                    ],
                }
                for s in runtime.gateway.schemas.values()
            ]
        }

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        if body.db_id not in runtime.gateway.schemas:
            return _error(400, "unknown_db", f"unknown db_id {body.db_id!r}")
        if not body.question.strip():
            return _error(400, "bad_request", "question must be nonempty")
        session = start_session(runtime, body.question, body.db_id)
        store.put(session)
        return session_view(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return session_view(store.get(session_id))

    @app.post("/sessions/{session_id}/answers")
    def post_answer(session_id: str, body: AnswerBody):
        session = store.get(session_id)
        with store.lock(session_id):
            current = session.current_question()
            if current is None:
                raise SessionError(f"session {session_id} is {session.phase}; no question to answer")
            if not 0 <= body.option_index < len(current.options):
                return _error(400, "bad_option", f"option_index {body.option_index} out of range")
            answer = Answer(token_index=body.question_ref, option_index=body.option_index)
            submit_answer(runtime, session, answer)
            store.log_answer(session, answer)
        return session_view(session)

    @app.post("/encode")
    def encode_pair(body: EncodeBody):
        if not body.tokens_x or not body.tokens_x_prime:
            return _error(400, "bad_request", "both token lists must be nonempty")
        h = encode(body.tokens_x, runtime.table, runtime.layer)
        u = encode(body.tokens_x_prime, runtime.table, runtime.layer)
        return {"h": h.tolist(), "u": u.tolist()}

    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
