"""Tamper-evidence chain: segment hashing, nonce-salted attestation, and the
chain verifier.

Sealing a segment sends its file digest to the attestation service, which
draws a secret 16-byte nonce, stores the pair, and returns
``sha256(ascii_hex_digest || nonce)``.  That response becomes the
``prev_attestation`` of the next segment, so rewriting any sealed file (or
any media blob it references) breaks the chain.  Verification needs the
attestation store because nonces never leave the service.
"""

from __future__ import annotations

import hashlib
import json
import re
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from .errors import ConflictError, TransportError, ValidationError
from .model import (
    GENESIS_ATTESTATION,
    PENDING_ATTESTATION,
    MediaRef,
    parse_segment,
    read_manifest,
    segment_filename,
)


def hash_segment(data: bytes) -> str:
    """SHA-256 of the exact on-disk bytes, lowercase hex."""
    return hashlib.sha256(data).hexdigest()


def response_digest(file_digest_hex: str, nonce: bytes) -> str:
    """The attestation response: SHA-256 of the ASCII digest plus the nonce."""
    return hashlib.sha256(file_digest_hex.encode("ascii") + nonce).hexdigest()


_HEX64 = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True)
class Attestation:
    session_id: str
    segment_index: int
    file_digest: str
    nonce_hex: str
    response_digest: str
    received_epoch_ms: int

    def to_obj(self, with_nonce: bool = True) -> dict:
        obj = {
            "session_id": self.session_id,
            "segment_index": self.segment_index,
            "file_digest": self.file_digest,
            "response_digest": self.response_digest,
            "received_epoch_ms": self.received_epoch_ms,
        }
        if with_nonce:
            obj["nonce_hex"] = self.nonce_hex
        return obj


class AttestationStore:
    """Append-only JSON-lines store of attestations; nonces never leave it.

    ``attest`` is idempotent per (session, index, digest) and rejects a
    different digest for an already-attested index.
    """

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[tuple[str, int], Attestation] = {}
        if self.path.is_file():
            for line in self.path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                obj = json.loads(line)
                att = Attestation(
                    session_id=obj["session_id"],
                    segment_index=obj["segment_index"],
                    file_digest=obj["file_digest"],
                    nonce_hex=obj["nonce_hex"],
                    response_digest=obj["response_digest"],
                    received_epoch_ms=obj["received_epoch_ms"],
                )
                self._index[(att.session_id, att.segment_index)] = att

    def attest(self, session_id: str, segment_index: int, file_digest: str) -> str:
        if not isinstance(file_digest, str) or not _HEX64.match(file_digest):
            raise ValidationError("file_digest: must be 64 lowercase hex chars")
        if not isinstance(segment_index, int) or segment_index < 0:
            raise ValidationError("segment_index: must be a non-negative integer")
        with self._lock:
            existing = self._index.get((session_id, segment_index))
            if existing is not None:
                if existing.file_digest == file_digest:
                    return existing.response_digest
                raise ConflictError(
                    f"segment {segment_index} of {session_id} already attested with a different digest")
            nonce = secrets.token_bytes(16)
            att = Attestation(
                session_id=session_id,
                segment_index=segment_index,
                file_digest=file_digest,
                nonce_hex=nonce.hex(),
                response_digest=response_digest(file_digest, nonce),
                received_epoch_ms=int(time.time() * 1000),
            )
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(att.to_obj()) + "\n")
            self._index[(session_id, segment_index)] = att
            return att.response_digest

    def get(self, session_id: str, segment_index: int) -> Attestation | None:
        with self._lock:
            return self._index.get((session_id, segment_index))

    def for_session(self, session_id: str) -> list[Attestation]:
        with self._lock:
            return sorted(
                (a for (sid, _), a in self._index.items() if sid == session_id),
                key=lambda a: a.segment_index,
            )


class LocalAttestClient:
    """Direct (in-process) attestation, used when no remote URL is set."""

    def __init__(self, store: AttestationStore):
        self.store = store

    def attest(self, session_id: str, segment_index: int, file_digest: str) -> str:
        return self.store.attest(session_id, segment_index, file_digest)


class HttpAttestClient:
    """Attestation over HTTP (`POST {url}/attest`)."""

    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def attest(self, session_id: str, segment_index: int, file_digest: str) -> str:
        try:
            response = self._client.post(self.base_url + "/attest", json={
                "session_id": session_id,
                "segment_index": segment_index,
                "file_digest": file_digest,
            })
        except httpx.HTTPError as exc:
            raise TransportError(f"attestation service unreachable: {exc}") from exc
        if response.status_code == 409:
            raise ConflictError(response.text)
        if response.status_code != 200:
            raise TransportError(f"attestation service returned {response.status_code}")
        return response.json()["response_digest"]


# ---------------------------------------------------------------------------
# Chain verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentCheck:
    segment_index: int
    status: str  # ok | pending | missing_attestation | digest_mismatch |
    #              chain_mismatch | media_mismatch | parse_error | missing_file
    message: str = ""

    def to_obj(self) -> dict:
        return {"segment_index": self.segment_index, "status": self.status, "message": self.message}


@dataclass(frozen=True)
class ChainReport:
    verdict: str  # intact | tampered | gapped
    first_bad_index: int | None
    details: tuple[SegmentCheck, ...]

    def to_obj(self) -> dict:
        return {
            "verdict": self.verdict,
            "first_bad_index": self.first_bad_index,
            "details": [d.to_obj() for d in self.details],
        }


def verify_chain(session_directory: Path | str, store: AttestationStore) -> ChainReport:
    """Re-derive and check the whole chain for one recorded session.

    Per segment: the file digest must match its stored attestation, the
    stored nonce must reproduce the response digest, the next segment's
    ``prev_attestation`` must equal that response, and every referenced
    media file must match its recorded digest.  A PENDING sentinel or a
    missing attestation is a gap, not tampering; any failed cryptographic
    check makes the verdict ``tampered`` at the smallest failing index.
    """
    directory = Path(session_directory)
    manifest = read_manifest(directory)
    session_id = manifest.session_id

    details: list[SegmentCheck] = []
    tampered: list[int] = []
    gapped = False

    def bad(index: int, status: str, message: str) -> None:
        details.append(SegmentCheck(index, status, message))
        tampered.append(index)

    prev_expected: str | None = GENESIS_ATTESTATION
    for i in range(manifest.segment_count):
        path = directory / segment_filename(i)
        if not path.is_file():
            bad(i, "missing_file", f"{path.name} not found")
            prev_expected = None
            continue
        data = path.read_bytes()
        digest = hash_segment(data)

        issues: list[tuple[str, str]] = []
        att = store.get(session_id, i)
        if att is None:
            gapped = True
            details.append(SegmentCheck(i, "missing_attestation", "no attestation on record"))
        else:
            if att.file_digest != digest:
                issues.append(("digest_mismatch", "file bytes do not match attested digest"))
            if response_digest(att.file_digest, bytes.fromhex(att.nonce_hex)) != att.response_digest:
                issues.append(("digest_mismatch", "attestation store response is inconsistent"))

        try:
            segment = parse_segment(data)
        except Exception as exc:
            issues.append(("parse_error", f"segment does not parse: {exc}"))
            segment = None

        if segment is not None:
            if segment.prev_attestation == PENDING_ATTESTATION:
                gapped = True
                details.append(SegmentCheck(i, "pending", "previous attestation was pending at seal time"))
            elif prev_expected is not None and segment.prev_attestation != prev_expected:
                issues.append(("chain_mismatch", "prev_attestation does not match previous response"))
            for rec in segment.records:
                if isinstance(rec, MediaRef):
                    media_path = directory / rec.path
                    if not media_path.is_file():
                        issues.append(("media_mismatch", f"{rec.path} missing"))
                    elif hash_segment(media_path.read_bytes()) != rec.digest:
                        issues.append(("media_mismatch", f"{rec.path} does not match recorded digest"))

        if issues:
            status, message = issues[0]
            bad(i, status, "; ".join(m for _, m in issues))
        elif att is not None and segment is not None and segment.prev_attestation != PENDING_ATTESTATION:
            details.append(SegmentCheck(i, "ok", ""))

        prev_expected = att.response_digest if att is not None else None

    extra = sorted(directory.glob("segment_*.json"))
    if len(extra) > manifest.segment_count:
        bad(manifest.segment_count, "missing_file",
            f"{len(extra)} segment files on disk but manifest records {manifest.segment_count}")

    if manifest.status == "sealed" and manifest.segment_count > 0 and not tampered:
        last = store.get(session_id, manifest.segment_count - 1)
        if last is not None and manifest.last_attestation not in (None, PENDING_ATTESTATION) \
                and manifest.last_attestation != last.response_digest:
            bad(manifest.segment_count - 1, "chain_mismatch",
                "manifest anchor does not match final attestation")
        if manifest.last_attestation == PENDING_ATTESTATION:
            gapped = True

    if tampered:
        return ChainReport("tampered", min(tampered), tuple(details))
    if gapped or manifest.attestation_gaps:
        return ChainReport("gapped", None, tuple(details))
    return ChainReport("intact", None, tuple(details))
