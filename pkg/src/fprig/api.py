"""HTTP and WebSocket surface over the ingestion core and attestation store.

One FastAPI app hosts the recorder endpoints, the attestation service, and
(optionally) the operator console's static files.  The ingest service
attests locally through the in-process store unless FPRIG_ATTEST_URL points
it at another instance.
"""

from __future__ import annotations

import asyncio
from pathlib import Path

from typing import Any

from fastapi import Body, FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse, JSONResponse, Response

from .chain import AttestationStore, HttpAttestClient, verify_chain
from .errors import (
    ConfigurationError,
    ConflictError,
    FprigError,
    NotFoundError,
    OrderingError,
    ParseError,
    ProviderError,
    TransportError,
    ValidationError,
)
from .model import session_dir
from .service import SessionManager

_STATUS = {
    ValidationError: 422,
    ConfigurationError: 422,
    ParseError: 422,
    NotFoundError: 404,
    ConflictError: 409,
    OrderingError: 409,
    ProviderError: 502,
    TransportError: 502,
}

_MEDIA_TYPES = {".ppm": "image/x-portable-pixmap", ".wav": "audio/wav"}

_FALLBACK_CONSOLE = """<!doctype html>
<html><head><title>fprig console</title></head>
<body><h1>fprig</h1>
<p>The operator console assets are not installed. Build the frontend and
point --console-dir (or FPRIG_CONSOLE_DIR) at its dist/ directory.</p>
</body></html>"""


def create_app(data_dir: Path | str, attest_url: str | None = None,
               console_dir: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="fprig", docs_url=None, redoc_url=None)

    store = AttestationStore(Path(data_dir) / "attestations.jsonl")
    attest_client = HttpAttestClient(attest_url) if attest_url else None
    manager = SessionManager(data_dir, attest_client=attest_client, attest_store=store)
    app.state.manager = manager
    app.state.attest_store = store
    app.state.data_dir = Path(data_dir)

    @app.exception_handler(FprigError)
    async def _fprig_error(_request: Request, exc: FprigError):
        body = {"error": {"code": exc.code, "message": str(exc)}}
        if isinstance(exc, ValidationError):
            body["error"]["violations"] = exc.violations
        return JSONResponse(status_code=_STATUS.get(type(exc), 500), content=body)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    # -- sessions --------------------------------------------------------

    @app.post("/sessions", status_code=201)
    def create_session(config: dict):
        manifest = manager.start_session(config)
        return manager.manifest_view(manifest.session_id)

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": manager.list_sessions()}

    @app.post("/sessions/{session_id}/ingest")
    def ingest(session_id: str, body: Any = Body()):
        if isinstance(body, dict) and "envelopes" in body:
            envelopes = body["envelopes"]
        elif isinstance(body, list):
            envelopes = body
        else:
            envelopes = [body]
        if not isinstance(envelopes, list):
            raise ValidationError("envelopes: must be an array")
        return {"acks": manager.ingest(session_id, envelopes)}

    @app.post("/sessions/{session_id}/stop")
    def stop(session_id: str):
        manager.stop_session(session_id)
        return manager.manifest_view(session_id)

    @app.get("/sessions/{session_id}/manifest")
    def manifest(session_id: str):
        return manager.manifest_view(session_id)

    @app.get("/sessions/{session_id}/records")
    def records(session_id: str, t0: float = 0.0, t1: float = float(2 ** 62),
                kinds: str | None = None):
        kind_list = tuple(k for k in kinds.split(",") if k) if kinds else None
        result = manager.playback(session_id, t0, t1, kind_list)
        return {"records": [r.to_obj() for r in result]}

    @app.get("/sessions/{session_id}/arousal")
    def arousal(session_id: str, t0: float = 0.0, t1: float = float(2 ** 62)):
        return {"series": manager.arousal_series(session_id, t0, t1)}

    @app.get("/sessions/{session_id}/media/{path:path}")
    def media(session_id: str, path: str):
        data = manager.media_bytes(session_id, f"media/{path}")
        media_type = _MEDIA_TYPES.get(Path(path).suffix, "application/octet-stream")
        return Response(content=data, media_type=media_type)

    @app.websocket("/sessions/{session_id}/live")
    async def live(websocket: WebSocket, session_id: str):
        await websocket.accept()
        try:
            sub = manager.subscribe(session_id)
        except NotFoundError:
            await websocket.close(code=4404)
            return
        try:
            sealed = False
            while not sealed:
                events = await asyncio.to_thread(sub.drain, 0.05)
                for event in events:
                    await websocket.send_json(event)
                    if event.get("type") == "session_sealed":
                        sealed = True
        except WebSocketDisconnect:
            pass
        finally:
            manager.unsubscribe(session_id, sub)
        try:
            await websocket.close()
        except RuntimeError:
            pass

    # -- attestation service ----------------------------------------------

    @app.post("/attest")
    def attest(body: dict):
        for fld in ("session_id", "segment_index", "file_digest"):
            if fld not in body:
                raise ValidationError(f"{fld}: required")
        response = store.attest(body["session_id"], body["segment_index"], body["file_digest"])
        return {"response_digest": response}

    @app.get("/attestations/{session_id}")
    def attestations(session_id: str):
        # Nonces are server-secret; only digests leave this endpoint.
        return {"attestations": [a.to_obj(with_nonce=False) for a in store.for_session(session_id)]}

    @app.post("/verify")
    def verify(body: dict):
        if "session_id" not in body:
            raise ValidationError("session_id: required")
        directory = session_dir(app.state.data_dir, body["session_id"])
        if not directory.is_dir():
            raise NotFoundError(f"unknown session {body['session_id']!r}")
        return verify_chain(directory, store).to_obj()

    # -- console ----------------------------------------------------------

    console = Path(console_dir) if console_dir else None
    if console and console.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console, html=True), name="console")
    else:
        @app.get("/console/")
        @app.get("/console")
        def console_placeholder():
            return HTMLResponse(_FALLBACK_CONSOLE)

    return app
