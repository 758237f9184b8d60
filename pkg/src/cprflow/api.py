"""HTTP surface for the session service.

Request/response endpoints for create, submit, snapshot and export, plus one
ordered server-sent-event stream per session. Stream events carry their
sequence number as the SSE id, so a client that reconnects with
``from_seq=<last seen>+1`` (or the standard Last-Event-ID header) resumes
without gaps or duplicates.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI, Header, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import records
from .service import ConfigValidationError, SessionService, UnknownSessionError

SSE_KEEPALIVE_SECONDS = 15.0


def _event_frame(e) -> str:
    data = json.dumps(records.event_to_record(e), sort_keys=True)
    return f"id: {e.seq}\ndata: {data}\n\n"


def create_app(service: SessionService, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cprflow session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: dict[str, Any] | None = None) -> dict[str, str]:
        overrides = (body or {}).get("config")
        try:
            session_id = service.create_session(overrides)
        except ConfigValidationError as exc:
            raise HTTPException(
                status_code=422,
                detail={"error": "invalid-config", "fields": exc.fields},
            ) from exc
        return {"session_id": session_id}

    @app.post("/sessions/{session_id}/commands")
    def submit_command(session_id: str, body: dict[str, Any]) -> dict[str, Any]:
        kind = body.get("kind")
        if not kind:
            raise HTTPException(status_code=422, detail="missing command kind")
        try:
            ack = service.submit_command(session_id, kind, body.get("payload"))
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session") from None
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {
            "accepted": ack.accepted,
            "reason": ack.reason,
            "enabled_commands": list(ack.enabled_commands),
            "events": [records.event_to_record(e) for e in ack.events],
        }

    @app.get("/sessions/{session_id}/snapshot")
    def snapshot(session_id: str) -> dict[str, Any]:
        try:
            return service.snapshot(session_id)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session") from None

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str) -> Response:
        try:
            data = service.export(session_id)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session") from None
        return Response(
            content=data,
            media_type="application/x-ndjson",
            headers={"Content-Disposition": f'attachment; filename="{session_id}.cpr"'},
        )

    @app.get("/sessions/{session_id}/events")
    def stream_events(
        session_id: str,
        request: Request,
        from_seq: int = Query(default=1, ge=1),
        last_event_id: str | None = Header(default=None, alias="Last-Event-ID"),
    ) -> StreamingResponse:
        if last_event_id is not None:
            try:
                from_seq = max(from_seq, int(last_event_id) + 1)
            except ValueError:
                pass
        try:
            sub = service.subscribe(session_id, from_seq)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session") from None

        def frames() -> Iterator[str]:
            try:
                while True:
                    try:
                        event = sub.get(timeout=SSE_KEEPALIVE_SECONDS)
                    except StopIteration:
                        yield "event: end\ndata: {}\n\n"
                        return
                    if event is None:
                        yield ": keepalive\n\n"
                        continue
                    yield _event_frame(event)
            finally:
                try:
                    service.unsubscribe(session_id, sub)
                except UnknownSessionError:
                    pass

        return StreamingResponse(
            frames(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
