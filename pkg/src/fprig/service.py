"""Ingestion core: session lifecycle, ordered buffering, analyzer dispatch,
segment rotation and sealing, playback, and the live feed.

Rotation is driven by data time (record timestamps crossing segment
boundaries), not wall clock, so replaying a recorded envelope log produces
byte-identical sealed segments.  Analyzers run synchronously on the ingest
path for the same reason.  The open segment buffer is lossy: a crash loses
unsealed records, and clients resume from the per-stream state captured at
the last seal.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import math
import queue
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import analysis
from .chain import AttestationStore, LocalAttestClient, hash_segment
from .des import extract_reports, tone_stream
from .errors import (
    ConflictError,
    OrderingError,
    ProviderError,
    TransportError,
    ValidationError,
)
from .model import (
    GENESIS_ATTESTATION,
    MEDIA_DIR,
    PENDING_ATTESTATION,
    EegFrame,
    GsrSample,
    MediaRef,
    Record,
    SegmentFile,
    Session,
    SessionConfig,
    SessionManifest,
    TranscriptRecord,
    audio_media_path,
    canonical_json_bytes,
    image_media_path,
    read_manifest,
    record_kind,
    segment_filename,
    serialize_segment,
    session_dir,
    timeline_query,
    write_manifest,
)

logger = logging.getLogger(__name__)

RAW_STREAMS = ("eeg", "gsr", "image", "audio")
STATE_FILENAME = "stream_state.json"

_BP_WINDOW_MS = 2000
_BP_STEP_MS = 1000


class Subscription:
    """One live-feed subscriber; events are queued at-least-once."""

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.events: queue.Queue = queue.Queue()
        self.closed = False

    def put(self, event: dict) -> None:
        if not self.closed:
            self.events.put(event)

    def get(self, timeout: float | None = None) -> dict | None:
        try:
            return self.events.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self, timeout: float | None = None) -> list[dict]:
        """Block up to ``timeout`` for one event, then take all queued ones."""
        first = self.get(timeout)
        if first is None:
            return []
        batch = [first]
        while True:
            try:
                batch.append(self.events.get_nowait())
            except queue.Empty:
                return batch


@dataclass
class _StreamState:
    seq: int = 0
    t_ms: float = -math.inf


@dataclass
class SessionRuntime:
    directory: Path
    manifest: SessionManifest
    lock: threading.RLock = field(default_factory=threading.RLock)
    open_records: list[Record] = field(default_factory=list)
    segment_index: int = 0
    segment_start_ms: int = 0
    prev_attestation: str = GENESIS_ATTESTATION
    streams: dict[str, _StreamState] = field(default_factory=dict)
    eeg_frames: list[EegFrame] = field(default_factory=list)
    bp_window_ms: int = 0
    gsr_history: list[GsrSample] = field(default_factory=list)
    transcripts: list[TranscriptRecord] = field(default_factory=list)
    providers: dict = field(default_factory=dict)
    subscribers: list[Subscription] = field(default_factory=list)
    feed_seq: int = 0
    record_counts: dict[str, int] = field(default_factory=dict)
    tone_iter: object = None
    next_tone_ms: int | None = None
    tones_emitted: list[int] = field(default_factory=list)
    pending_attestations: list[int] = field(default_factory=list)

    @property
    def config(self) -> SessionConfig:
        return self.manifest.config

    @property
    def high_water_ms(self) -> float:
        times = [s.t_ms for s in self.streams.values() if s.t_ms > -math.inf]
        return max(times) if times else -math.inf


class SessionManager:
    """Owns all sessions under one data directory."""

    def __init__(self, data_dir: Path | str, attest_client=None,
                 attest_store: AttestationStore | None = None):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        if attest_store is None and attest_client is None:
            attest_store = AttestationStore(self.data_dir / "attestations.jsonl")
        self.attest_store = attest_store
        self.attest_client = attest_client or LocalAttestClient(attest_store)
        self._lock = threading.Lock()
        self._sessions: dict[str, SessionRuntime] = {}

    # -- lifecycle -------------------------------------------------------

    def start_session(self, config: SessionConfig | dict) -> SessionManifest:
        if isinstance(config, dict):
            config = SessionConfig.from_obj(config)
        config.check()
        directory = session_dir(self.data_dir, config.session_id)
        with self._lock:
            if config.session_id in self._sessions or (directory / "manifest.json").exists():
                raise ConflictError(f"session {config.session_id!r} already exists")
            (directory / MEDIA_DIR).mkdir(parents=True, exist_ok=True)
            manifest = SessionManifest(
                session_id=config.session_id,
                start_epoch_ms=int(time.time() * 1000),
                config=config,
            )
            rt = SessionRuntime(directory=directory, manifest=manifest)
            self._init_analysis(rt)
            self._persist(rt)
            self._sessions[config.session_id] = rt
            return manifest

    def _init_analysis(self, rt: SessionRuntime) -> None:
        cfg = rt.config
        rt.providers = {
            name: analysis.make_provider(cfg.providers.get(name))
            for name in analysis.ANALYZER_NAMES
        }
        rt.streams = {s: _StreamState() for s in RAW_STREAMS}
        rt.tone_iter = tone_stream(cfg.rng_seed, cfg.des_interval_min_s, cfg.des_interval_max_s)
        rt.next_tone_ms = next(rt.tone_iter)

    def _runtime(self, session_id: str) -> SessionRuntime:
        with self._lock:
            rt = self._sessions.get(session_id)
            if rt is not None:
                return rt
            rt = self._load(session_id)
            self._sessions[session_id] = rt
            return rt

    def _load(self, session_id: str) -> SessionRuntime:
        """Resume a session from disk after a restart."""
        directory = session_dir(self.data_dir, session_id)
        manifest = read_manifest(directory)  # NotFoundError when absent
        rt = SessionRuntime(directory=directory, manifest=manifest)
        self._init_analysis(rt)
        rt.pending_attestations = list(manifest.attestation_gaps)

        state_path = directory / STATE_FILENAME
        if state_path.is_file():
            state = json.loads(state_path.read_text("utf-8"))
            for name, st in state.get("streams", {}).items():
                rt.streams[name] = _StreamState(seq=st["seq"], t_ms=st["t_ms"])
            rt.segment_index = state["segment_index"]
            rt.segment_start_ms = state["segment_start_ms"]
            rt.prev_attestation = state["prev_attestation"]
            rt.bp_window_ms = state["bp_window_ms"]
        else:
            rt.segment_index = manifest.segment_count
            rt.segment_start_ms = manifest.segment_count * manifest.config.segment_duration_ms
            rt.prev_attestation = manifest.last_attestation or GENESIS_ATTESTATION
            rt.bp_window_ms = rt.segment_start_ms

        self._reconcile_segments(rt)

        # Rebuild analyzer context from sealed segments: transcripts feed the
        # stop-time DES extraction, trailing GSR feeds normalization, and the
        # per-kind counters back the manifest view.
        session = Session(directory=directory, manifest=rt.manifest)
        for seg in session.segments():
            for rec in seg.records:
                kind = record_kind(rec)
                rt.record_counts[kind] = rt.record_counts.get(kind, 0) + 1
                if isinstance(rec, TranscriptRecord):
                    rt.transcripts.append(rec)
                elif isinstance(rec, GsrSample):
                    rt.gsr_history.append(rec)
        self._prune_gsr(rt)

        # Tone schedule replays deterministically up to the high-water mark.
        hw = rt.high_water_ms
        while rt.next_tone_ms is not None and rt.next_tone_ms <= hw:
            rt.tones_emitted.append(rt.next_tone_ms)
            rt.next_tone_ms = next(rt.tone_iter)
        return rt

    def _reconcile_segments(self, rt: SessionRuntime) -> None:
        """Adopt segment files sealed before a crash cut the manifest update."""
        while (rt.directory / segment_filename(rt.manifest.segment_count)).is_file():
            index = rt.manifest.segment_count
            data = (rt.directory / segment_filename(index)).read_bytes()
            response = self._attest(rt, index, hash_segment(data))
            rt.manifest = replace(
                rt.manifest, segment_count=index + 1, last_attestation=response,
                attestation_gaps=tuple(sorted(set(rt.manifest.attestation_gaps)
                                              | ({index} if response == PENDING_ATTESTATION else set()))),
            )
            rt.segment_index = index + 1
            rt.segment_start_ms = rt.segment_index * rt.config.segment_duration_ms
            rt.prev_attestation = response
            self._persist(rt)

    # -- ingest ----------------------------------------------------------

    def ingest(self, session_id: str, envelopes: list[dict]) -> list[dict]:
        rt = self._runtime(session_id)
        acks = []
        with rt.lock:
            for env in envelopes:
                acks.append(self._ingest_one(rt, env))
        return acks

    def _ingest_one(self, rt: SessionRuntime, env: dict) -> dict:
        if not isinstance(env, dict):
            raise ValidationError("envelope: must be an object")
        stream = env.get("stream")
        if stream not in RAW_STREAMS:
            raise ValidationError(f"envelope.stream: must be one of {RAW_STREAMS}")
        seq = env.get("seq")
        if not isinstance(seq, int) or isinstance(seq, bool) or seq < 1:
            raise ValidationError("envelope.seq: must be a positive integer")
        t_ms = env.get("t_ms")
        if not isinstance(t_ms, (int, float)) or isinstance(t_ms, bool) or not math.isfinite(t_ms) or t_ms < 0:
            raise ValidationError("envelope.t_ms: must be a non-negative number")
        payload = env.get("payload")
        if not isinstance(payload, dict):
            raise ValidationError("envelope.payload: must be an object")

        state = rt.streams[stream]
        if seq <= state.seq:
            return {"stream": stream, "seq": seq, "status": "duplicate"}
        if rt.manifest.status != "recording":
            raise ConflictError(f"session {rt.manifest.session_id!r} is sealed")
        if t_ms < state.t_ms or (stream in ("image", "audio") and t_ms <= state.t_ms):
            raise OrderingError(
                f"stream {stream}: t_ms {t_ms} regresses behind {state.t_ms}")
        if t_ms < rt.segment_start_ms:
            raise OrderingError(
                f"stream {stream}: t_ms {t_ms} predates open segment start {rt.segment_start_ms}")

        while t_ms >= rt.segment_start_ms + rt.config.segment_duration_ms:
            self._rotate(rt)

        handler = getattr(self, f"_ingest_{stream}")
        handler(rt, t_ms, payload)

        state.seq = seq
        state.t_ms = t_ms
        self._pump_tones(rt)
        return {"stream": stream, "seq": seq, "status": "ok"}

    def _ingest_eeg(self, rt: SessionRuntime, t_ms: float, payload: dict) -> None:
        channels = payload.get("channels")
        if not isinstance(channels, list):
            raise ValidationError("payload.channels: required for eeg")
        frame = EegFrame(t_ms=t_ms, channels=tuple(channels))
        issues = frame.check()
        if issues:
            raise ValidationError("invalid eeg frame", [f"payload.{i}" for i in issues])
        self._append(rt, frame)
        rt.eeg_frames.append(frame)
        self._pump_band_power(rt)

    def _ingest_gsr(self, rt: SessionRuntime, t_ms: float, payload: dict) -> None:
        sample = GsrSample(t_ms=t_ms, value=payload.get("value"))
        issues = sample.check()
        if issues:
            raise ValidationError("invalid gsr sample", [f"payload.{i}" for i in issues])
        self._append(rt, sample)
        rt.gsr_history.append(sample)
        self._prune_gsr(rt)

    def _ingest_image(self, rt: SessionRuntime, t_ms: float, payload: dict) -> None:
        data = _decode_media(payload)
        sidecar = payload.get("sidecar")
        rel_path = image_media_path(int(t_ms))
        boxes: list = []
        try:
            boxes = analysis.detect_faces(
                data, rt.providers["face"], sidecar=sidecar, media_path=rel_path)
        except (ProviderError, TransportError) as exc:
            logger.warning("face provider gap at t=%s: %s", t_ms, exc)
        stored = analysis.blur_faces(data, boxes) if (boxes and rt.config.blur_enabled) else data
        self._write_media(rt, rel_path, stored)
        self._append(rt, MediaRef(
            t_ms=t_ms, kind="image", path=rel_path, digest=hash_segment(stored)))
        try:
            annotation = analysis.annotate_image(
                stored, rt.providers["image_annotation"], t_ms,
                sidecar=sidecar, media_path=rel_path)
            self._append(rt, annotation)
        except (ProviderError, TransportError) as exc:
            logger.warning("image annotation gap at t=%s: %s", t_ms, exc)

    def _ingest_audio(self, rt: SessionRuntime, t_ms: float, payload: dict) -> None:
        data = _decode_media(payload)
        duration = payload.get("duration_ms")
        if not isinstance(duration, (int, float)) or duration <= 0:
            raise ValidationError("payload.duration_ms: required positive number for audio")
        sidecar = payload.get("sidecar")
        rel_path = audio_media_path(int(t_ms))
        self._write_media(rt, rel_path, data)
        self._append(rt, MediaRef(
            t_ms=t_ms, kind="audio", path=rel_path, digest=hash_segment(data),
            duration_ms=duration))
        try:
            lines = analysis.transcribe(
                t_ms, rt.providers["transcript"], sidecar=sidecar,
                media_path=rel_path, audio=data)
        except (ProviderError, TransportError) as exc:
            logger.warning("transcript gap at t=%s: %s", t_ms, exc)
            return
        for record in lines:
            self._append(rt, record)
            rt.transcripts.append(record)
            if record.speaker == "wearer":
                try:
                    self._append(rt, analysis.sentiment(
                        record.text, t_ms=record.t_start_ms,
                        provider=rt.providers["sentiment"]))
                except (ProviderError, TransportError) as exc:
                    logger.warning("sentiment gap at t=%s: %s", record.t_start_ms, exc)

    def _write_media(self, rt: SessionRuntime, rel_path: str, data: bytes) -> None:
        path = rt.directory / rel_path
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)

    def _append(self, rt: SessionRuntime, record: Record) -> None:
        rt.open_records.append(record)
        kind = record_kind(record)
        rt.record_counts[kind] = rt.record_counts.get(kind, 0) + 1
        event = {"type": "record", "kind": kind, "record": record.to_obj()}
        if kind == "cognition":
            event["arousal"] = analysis.arousal_proxy(record)
        self._publish(rt, event)

    def _prune_gsr(self, rt: SessionRuntime) -> None:
        if not rt.gsr_history:
            return
        horizon = rt.gsr_history[-1].t_ms - (analysis.GSR_NORM_WINDOW_MS + 5000)
        while rt.gsr_history and rt.gsr_history[0].t_ms < horizon:
            rt.gsr_history.pop(0)

    # -- derived streams -------------------------------------------------

    def _pump_band_power(self, rt: SessionRuntime) -> None:
        rate = rt.config.eeg_rate_hz
        expected = int(2 * rate)
        frames = rt.eeg_frames
        while True:
            w = rt.bp_window_ms
            drop = 0
            while drop < len(frames) and frames[drop].t_ms < w:
                drop += 1
            if drop:
                del frames[:drop]
            if not frames:
                return
            in_window = 0
            while in_window < len(frames) and frames[in_window].t_ms < w + _BP_WINDOW_MS:
                in_window += 1
            if in_window == expected:
                self._emit_window(rt, frames[:expected], w)
                rt.bp_window_ms = w + _BP_STEP_MS
            elif in_window > expected or in_window < len(frames):
                rt.bp_window_ms = w + _BP_STEP_MS  # gapped window: skip, never emit
            else:
                return

    def _emit_window(self, rt: SessionRuntime, frames: list[EegFrame], window_start: int) -> None:
        bp = analysis.band_power(frames, rt.config.eeg_rate_hz)
        window_end = window_start + _BP_WINDOW_MS
        history = [s for s in rt.gsr_history
                   if window_end - analysis.GSR_NORM_WINDOW_MS <= s.t_ms <= window_end]
        g = analysis.normalize_gsr(history, history[-1].value) if history else 0.5
        self._append(rt, bp)
        self._append(rt, analysis.cognition_metrics(bp, g))
        try:
            self._append(rt, analysis.facial_expression(frames, rt.providers["expression"]))
        except (ProviderError, TransportError) as exc:
            logger.warning("expression gap at t=%s: %s", window_start, exc)

    def _pump_tones(self, rt: SessionRuntime) -> None:
        hw = rt.high_water_ms
        while rt.next_tone_ms is not None and rt.next_tone_ms <= hw:
            rt.tones_emitted.append(rt.next_tone_ms)
            self._publish(rt, {"type": "des_tone", "t_ms": rt.next_tone_ms})
            rt.next_tone_ms = next(rt.tone_iter)

    # -- sealing ---------------------------------------------------------

    def _attest(self, rt: SessionRuntime, index: int, digest: str) -> str:
        try:
            return self.attest_client.attest(rt.manifest.session_id, index, digest)
        except TransportError as exc:
            logger.warning("attestation unavailable for segment %d: %s", index, exc)
            return PENDING_ATTESTATION

    def _retry_pending(self, rt: SessionRuntime) -> None:
        still = []
        for index in rt.pending_attestations:
            path = rt.directory / segment_filename(index)
            if not path.is_file():
                continue
            response = self._attest(rt, index, hash_segment(path.read_bytes()))
            if response == PENDING_ATTESTATION:
                still.append(index)
        rt.pending_attestations = still

    def _rotate(self, rt: SessionRuntime) -> None:
        records = sorted(rt.open_records, key=lambda r: r.sort_t)  # stable
        segment = SegmentFile(
            session_id=rt.manifest.session_id,
            segment_index=rt.segment_index,
            prev_attestation=rt.prev_attestation,
            start_ms=rt.segment_start_ms,
            end_ms=rt.segment_start_ms + rt.config.segment_duration_ms,
            records=tuple(records),
        )
        data = serialize_segment(segment)
        path = rt.directory / segment_filename(rt.segment_index)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_bytes(data)

        self._retry_pending(rt)
        response = self._attest(rt, rt.segment_index, hash_segment(data))
        tmp.replace(path)

        gaps = set(rt.manifest.attestation_gaps)
        if response == PENDING_ATTESTATION:
            gaps.add(rt.segment_index)
            rt.pending_attestations.append(rt.segment_index)
        rt.manifest = replace(
            rt.manifest,
            segment_count=rt.segment_index + 1,
            last_attestation=response,
            attestation_gaps=tuple(sorted(gaps)),
        )
        rt.segment_index += 1
        rt.segment_start_ms += rt.config.segment_duration_ms
        rt.prev_attestation = response
        rt.open_records = []
        self._persist(rt)

    def _persist(self, rt: SessionRuntime) -> None:
        write_manifest(rt.directory, rt.manifest)
        state = {
            "streams": {name: {"seq": st.seq, "t_ms": st.t_ms if st.t_ms > -math.inf else -1}
                        for name, st in rt.streams.items()},
            "segment_index": rt.segment_index,
            "segment_start_ms": rt.segment_start_ms,
            "prev_attestation": rt.prev_attestation,
            "bp_window_ms": rt.bp_window_ms,
        }
        tmp = rt.directory / (STATE_FILENAME + ".tmp")
        tmp.write_bytes(canonical_json_bytes(state))
        tmp.replace(rt.directory / STATE_FILENAME)

    def stop_session(self, session_id: str) -> SessionManifest:
        rt = self._runtime(session_id)
        with rt.lock:
            if rt.manifest.status == "sealed":
                return rt.manifest
            for report in extract_reports(sorted(rt.transcripts, key=lambda t: t.t_start_ms)):
                self._append(rt, report)
            self._rotate(rt)
            rt.manifest = replace(rt.manifest, status="sealed")
            self._persist(rt)
            self._publish(rt, {"type": "session_sealed"})
            return rt.manifest

    # -- queries ---------------------------------------------------------

    def get_manifest(self, session_id: str) -> SessionManifest:
        return self._runtime(session_id).manifest

    def manifest_view(self, session_id: str) -> dict:
        rt = self._runtime(session_id)
        with rt.lock:
            obj = rt.manifest.to_obj()
            obj["record_counts"] = dict(sorted(rt.record_counts.items()))
            obj["des_tones"] = list(rt.tones_emitted)
            return obj

    def playback(self, session_id: str, t0_ms: float, t1_ms: float,
                 kinds=None) -> list[Record]:
        rt = self._runtime(session_id)
        with rt.lock:
            session = Session(directory=rt.directory, manifest=rt.manifest)
            return timeline_query(session, t0_ms, t1_ms, kinds,
                                  extra_records=tuple(rt.open_records))

    def arousal_series(self, session_id: str, t0_ms: float, t1_ms: float) -> list[dict]:
        records = self.playback(session_id, t0_ms, t1_ms, kinds=("cognition",))
        return [{"t_ms": r.t_ms, "arousal": analysis.arousal_proxy(r)} for r in records]

    def media_bytes(self, session_id: str, rel_path: str) -> bytes:
        rt = self._runtime(session_id)
        return Session(directory=rt.directory, manifest=rt.manifest).media_bytes(rel_path)

    def list_sessions(self) -> list[dict]:
        seen = {}
        for path in sorted(self.data_dir.iterdir()) if self.data_dir.is_dir() else []:
            if (path / "manifest.json").is_file():
                try:
                    m = read_manifest(path)
                    seen[m.session_id] = {
                        "session_id": m.session_id,
                        "status": m.status,
                        "segment_count": m.segment_count,
                    }
                except Exception:
                    continue
        with self._lock:
            for sid, rt in self._sessions.items():
                seen[sid] = {
                    "session_id": sid,
                    "status": rt.manifest.status,
                    "segment_count": rt.manifest.segment_count,
                }
        return [seen[k] for k in sorted(seen)]

    # -- live feed -------------------------------------------------------

    def subscribe(self, session_id: str) -> Subscription:
        rt = self._runtime(session_id)
        with rt.lock:
            sub = Subscription(session_id)
            if rt.manifest.status == "sealed":
                rt.feed_seq += 1
                sub.put({"type": "session_sealed", "feed_seq": rt.feed_seq,
                         "session_id": session_id})
                return sub
            rt.subscribers.append(sub)
            return sub

    def unsubscribe(self, session_id: str, sub: Subscription) -> None:
        rt = self._runtime(session_id)
        with rt.lock:
            sub.closed = True
            if sub in rt.subscribers:
                rt.subscribers.remove(sub)

    def _publish(self, rt: SessionRuntime, event: dict) -> None:
        # feed_seq advances whether or not anyone is listening, so a
        # resubscribing client can detect the events it missed.
        rt.feed_seq += 1
        if not rt.subscribers:
            return
        event = {**event, "feed_seq": rt.feed_seq, "session_id": rt.manifest.session_id}
        for sub in list(rt.subscribers):
            sub.put(event)
        if event["type"] == "session_sealed":
            for sub in list(rt.subscribers):
                sub.closed = True
            rt.subscribers.clear()


def _decode_media(payload: dict) -> bytes:
    encoded = payload.get("data_b64")
    if not isinstance(encoded, str):
        raise ValidationError("payload.data_b64: required")
    try:
        return base64.b64decode(encoded, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ValidationError(f"payload.data_b64: invalid base64 ({exc})") from exc
