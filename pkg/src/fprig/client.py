"""Ingest clients used by the simulator, harness, and CLI.

``LocalIngestClient`` drives a SessionManager in-process (tests, harness);
``HttpIngestClient`` speaks the wire protocol to a running service.  Both
expose the same three calls: start, ingest, stop.
"""

from __future__ import annotations

import httpx

from .errors import (
    ConflictError,
    FprigError,
    NotFoundError,
    OrderingError,
    TransportError,
    ValidationError,
)
from .model import SessionConfig
from .service import SessionManager

_ERROR_BY_CODE = {
    "validation": ValidationError,
    "configuration": ValidationError,
    "not_found": NotFoundError,
    "conflict": ConflictError,
    "ordering": OrderingError,
}


class LocalIngestClient:
    def __init__(self, manager: SessionManager):
        self.manager = manager

    def start(self, config: SessionConfig | dict) -> dict:
        manifest = self.manager.start_session(config)
        return self.manager.manifest_view(manifest.session_id)

    def ingest(self, session_id: str, envelopes: list[dict]) -> list[dict]:
        return self.manager.ingest(session_id, envelopes)

    def stop(self, session_id: str) -> dict:
        self.manager.stop_session(session_id)
        return self.manager.manifest_view(session_id)


class HttpIngestClient:
    """Wire-protocol client; accepts any httpx.Client (including test clients)."""

    def __init__(self, endpoint_or_client: str | httpx.Client, timeout: float = 30.0):
        if isinstance(endpoint_or_client, str):
            self._client = httpx.Client(base_url=endpoint_or_client, timeout=timeout)
        else:
            self._client = endpoint_or_client

    def _request(self, method: str, url: str, **kwargs) -> httpx.Response:
        try:
            response = self._client.request(method, url, **kwargs)
        except httpx.HTTPError as exc:
            raise TransportError(f"{url}: {exc}") from exc
        if response.status_code >= 400:
            try:
                error = response.json().get("error", {})
            except ValueError:
                error = {}
            cls = _ERROR_BY_CODE.get(error.get("code"), FprigError)
            raise cls(error.get("message", f"{url} returned {response.status_code}"))
        return response

    def start(self, config: SessionConfig | dict) -> dict:
        obj = config.to_obj() if isinstance(config, SessionConfig) else config
        return self._request("POST", "/sessions", json=obj).json()

    def ingest(self, session_id: str, envelopes: list[dict]) -> list[dict]:
        response = self._request(
            "POST", f"/sessions/{session_id}/ingest", json={"envelopes": envelopes})
        return response.json()["acks"]

    def stop(self, session_id: str) -> dict:
        return self._request("POST", f"/sessions/{session_id}/stop").json()

    def records(self, session_id: str, t0: float = 0, t1: float = 2 ** 62,
                kinds: str | None = None) -> list[dict]:
        params = {"t0": t0, "t1": t1}
        if kinds:
            params["kinds"] = kinds
        response = self._request("GET", f"/sessions/{session_id}/records", params=params)
        return response.json()["records"]

    def manifest(self, session_id: str) -> dict:
        return self._request("GET", f"/sessions/{session_id}/manifest").json()
