"""Domain types, canonical JSON segment format, validation, and timeline queries.

A recording session is a directory of numbered JSON segment files plus a
manifest and a ``media/`` directory of referenced image/audio blobs.  Segment
bytes are canonical (sorted keys, no insignificant whitespace, integral
numbers emitted as integers) so that the integrity chain hashes deterministic
bytes.  All record types are immutable values; serialization and validation
are pure functions.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence, Union

from .errors import NotFoundError, ParseError, ValidationError

SCHEMA_VERSION = "1.0"

# Sentinels of the integrity chain.
GENESIS_ATTESTATION = "0" * 64
PENDING_ATTESTATION = "PENDING"

# Fixed camera frame; the simulator generates exactly this geometry and
# annotation boxes are validated against it.
IMAGE_WIDTH = 320
IMAGE_HEIGHT = 240

EEG_CHANNELS = 14
BAND_NAMES = ("theta", "alpha", "betaL", "betaH", "gamma")

EYE_ACTIONS = ("neutral", "blink", "wink_left", "wink_right")
UPPER_FACE = ("neutral", "raise_brow", "furrow_brow")
LOWER_FACE = ("neutral", "smile", "clench", "frown")
SENTIMENT_LABELS = ("positive", "negative", "mixed", "neutral")
SPEAKERS = ("wearer", "other")

_HEX64 = re.compile(r"^[0-9a-f]{64}$")
_SESSION_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,63}$")

INT16_MIN, INT16_MAX = -32768, 32767


def _is_real(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


# ---------------------------------------------------------------------------
# Session configuration and manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SessionConfig:
    """Per-session recording parameters.

    Rates are configurable; the defaults give 1 Hz images and GSR, 128 Hz
    EEG, 60 s segments, and DES tone gaps uniform in [15, 60] minutes.
    ``providers`` maps an analyzer name (``face``, ``transcript``,
    ``sentiment``, ``image_annotation``, ``expression``) to a provider
    configuration dict with at least a ``kind`` of ``reference``,
    ``sidecar`` or ``remote``.
    """

    session_id: str
    image_period_ms: int = 1000
    gsr_period_ms: int = 1000
    eeg_rate_hz: int = 128
    segment_duration_ms: int = 60000
    des_interval_min_s: int = 900
    des_interval_max_s: int = 3600
    blur_enabled: bool = True
    providers: dict = field(default_factory=dict)
    rng_seed: int = 0

    def validate(self) -> list[str]:
        v = []
        if not isinstance(self.session_id, str) or not _SESSION_ID.match(self.session_id):
            v.append("session_id: must match [A-Za-z0-9][A-Za-z0-9._-]{0,63}")
        for name in ("image_period_ms", "gsr_period_ms", "eeg_rate_hz",
                     "segment_duration_ms", "des_interval_min_s", "des_interval_max_s"):
            val = getattr(self, name)
            if not _is_int(val) or val <= 0:
                v.append(f"{name}: must be a positive integer")
        if _is_int(self.image_period_ms) and self.image_period_ms < 100:
            v.append("image_period_ms: must be >= 100")
        if _is_int(self.segment_duration_ms) and self.segment_duration_ms < 1000:
            v.append("segment_duration_ms: must be >= 1000")
        if (_is_int(self.des_interval_min_s) and _is_int(self.des_interval_max_s)
                and self.des_interval_min_s > self.des_interval_max_s):
            v.append("des_interval_min_s: must be <= des_interval_max_s")
        if not _is_int(self.rng_seed) or not (-(2 ** 63) <= self.rng_seed < 2 ** 64):
            v.append("rng_seed: must be a 64-bit integer")
        if not isinstance(self.providers, dict):
            v.append("providers: must be an object")
        else:
            for key, spec in self.providers.items():
                if not isinstance(spec, dict) or spec.get("kind") not in ("reference", "sidecar", "remote"):
                    v.append(f"providers.{key}.kind: must be reference, sidecar or remote")
        return v

    def check(self) -> "SessionConfig":
        v = self.validate()
        if v:
            raise ValidationError("invalid session config", v)
        return self

    def to_obj(self) -> dict:
        return {
            "session_id": self.session_id,
            "image_period_ms": self.image_period_ms,
            "gsr_period_ms": self.gsr_period_ms,
            "eeg_rate_hz": self.eeg_rate_hz,
            "segment_duration_ms": self.segment_duration_ms,
            "des_interval_min_s": self.des_interval_min_s,
            "des_interval_max_s": self.des_interval_max_s,
            "blur_enabled": self.blur_enabled,
            "providers": self.providers,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "SessionConfig":
        if not isinstance(obj, dict):
            raise ValidationError("config: must be an object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"config: unknown fields {sorted(unknown)}")
        if "session_id" not in obj:
            raise ValidationError("config.session_id: required")
        return cls(**obj)


@dataclass(frozen=True)
class SessionManifest:
    """On-disk session header; one per session directory."""

    session_id: str
    start_epoch_ms: int
    config: SessionConfig
    segment_count: int = 0
    genesis_attestation: str = GENESIS_ATTESTATION
    status: str = "recording"
    last_attestation: str | None = None
    attestation_gaps: tuple[int, ...] = ()

    def to_obj(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": self.session_id,
            "start_epoch_ms": self.start_epoch_ms,
            "config": self.config.to_obj(),
            "segment_count": self.segment_count,
            "genesis_attestation": self.genesis_attestation,
            "status": self.status,
            "last_attestation": self.last_attestation,
            "attestation_gaps": list(self.attestation_gaps),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "SessionManifest":
        try:
            return cls(
                session_id=obj["session_id"],
                start_epoch_ms=obj["start_epoch_ms"],
                config=SessionConfig.from_obj(obj["config"]),
                segment_count=obj["segment_count"],
                genesis_attestation=obj["genesis_attestation"],
                status=obj["status"],
                last_attestation=obj.get("last_attestation"),
                attestation_gaps=tuple(obj.get("attestation_gaps", ())),
            )
        except KeyError as exc:
            raise ValidationError(f"manifest.{exc.args[0]}: required") from exc


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EegFrame:
    KIND = "eeg"
    t_ms: float
    channels: tuple[int, ...]

    @property
    def sort_t(self) -> float:
        return self.t_ms

    def to_obj(self) -> dict:
        return {"kind": self.KIND, "t_ms": self.t_ms, "channels": list(self.channels)}

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_ms):
            v.append("t_ms: must be a finite number")
        if not isinstance(self.channels, tuple) or len(self.channels) != EEG_CHANNELS:
            v.append(f"channels: expected {EEG_CHANNELS} channels, got "
                     f"{len(self.channels) if isinstance(self.channels, tuple) else type(self.channels).__name__}")
        else:
            for i, c in enumerate(self.channels):
                if not _is_int(c) or not (INT16_MIN <= c <= INT16_MAX):
                    v.append(f"channels[{i}]: must be a signed 16-bit integer")
                    break
        return v


@dataclass(frozen=True)
class GsrSample:
    KIND = "gsr"
    t_ms: float
    value: float

    @property
    def sort_t(self) -> float:
        return self.t_ms

    def to_obj(self) -> dict:
        return {"kind": self.KIND, "t_ms": self.t_ms, "value": self.value}

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_ms):
            v.append("t_ms: must be a finite number")
        if not _is_real(self.value) or self.value < 0:
            v.append("value: must be >= 0")
        return v


@dataclass(frozen=True)
class MediaRef:
    """Pointer to an on-disk media blob, bound into the chain by digest."""

    t_ms: float
    kind: str  # image | audio
    path: str
    digest: str
    duration_ms: float | None = None

    @property
    def sort_t(self) -> float:
        return self.t_ms

    def to_obj(self) -> dict:
        obj = {"kind": self.kind, "t_ms": self.t_ms, "path": self.path, "digest": self.digest}
        if self.kind == "audio":
            obj["duration_ms"] = self.duration_ms
        return obj

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_ms):
            v.append("t_ms: must be a finite number")
        if self.kind not in ("image", "audio"):
            v.append("kind: must be image or audio")
        if not isinstance(self.path, str) or not self.path.startswith("media/") or ".." in self.path:
            v.append("path: must be a relative path inside media/")
        if not isinstance(self.digest, str) or not _HEX64.match(self.digest):
            v.append("digest: must be 64 lowercase hex chars")
        if self.kind == "audio":
            if not _is_real(self.duration_ms) or self.duration_ms <= 0:
                v.append("duration_ms: required positive number for audio")
        elif self.duration_ms is not None:
            v.append("duration_ms: only valid for audio")
        return v


@dataclass(frozen=True)
class BandPowerRecord:
    KIND = "band_power"
    t_ms: float
    per_channel: tuple[tuple[float, ...], ...]  # 14 x 5
    avg: tuple[float, ...]  # 5

    @property
    def sort_t(self) -> float:
        return self.t_ms

    def to_obj(self) -> dict:
        return {
            "kind": self.KIND,
            "t_ms": self.t_ms,
            "per_channel": [list(row) for row in self.per_channel],
            "avg": list(self.avg),
        }

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_ms):
            v.append("t_ms: must be a finite number")
        if len(self.per_channel) != EEG_CHANNELS or any(len(r) != len(BAND_NAMES) for r in self.per_channel):
            v.append(f"per_channel: expected {EEG_CHANNELS}x{len(BAND_NAMES)} values")
            return v
        if len(self.avg) != len(BAND_NAMES):
            v.append(f"avg: expected {len(BAND_NAMES)} values")
            return v
        for row in self.per_channel:
            if any(not _is_real(x) or x < 0 for x in row):
                v.append("per_channel: values must be finite and >= 0")
                break
        for b in range(len(BAND_NAMES)):
            mean = sum(row[b] for row in self.per_channel) / EEG_CHANNELS
            got = self.avg[b]
            if not _is_real(got) or got < 0 or abs(got - mean) > 1e-9 * max(abs(mean), 1e-30):
                v.append(f"avg[{b}]: must equal channel mean within 1e-9 relative")
        return v


@dataclass(frozen=True)
class CognitionRecord:
    KIND = "cognition"
    t_ms: float
    engagement: float
    excitement: float
    stress: float
    relaxation: float
    interest: float
    focus: float

    METRICS = ("engagement", "excitement", "stress", "relaxation", "interest", "focus")

    @property
    def sort_t(self) -> float:
        return self.t_ms

    def to_obj(self) -> dict:
        obj = {"kind": self.KIND, "t_ms": self.t_ms}
        for m in self.METRICS:
            obj[m] = getattr(self, m)
        return obj

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_ms):
            v.append("t_ms: must be a finite number")
        for m in self.METRICS:
            val = getattr(self, m)
            if not _is_real(val) or not (0.0 <= val <= 1.0):
                v.append(f"{m}: must be in [0, 1]")
        return v


@dataclass(frozen=True)
class FacialExpressionRecord:
    KIND = "facial_expression"
    t_ms: float
    eye_action: str = "neutral"
    upper_face: str = "neutral"
    lower_face: str = "neutral"
    power: float = 0.0

    @property
    def sort_t(self) -> float:
        return self.t_ms

    def to_obj(self) -> dict:
        return {
            "kind": self.KIND,
            "t_ms": self.t_ms,
            "eye_action": self.eye_action,
            "upper_face": self.upper_face,
            "lower_face": self.lower_face,
            "power": self.power,
        }

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_ms):
            v.append("t_ms: must be a finite number")
        if self.eye_action not in EYE_ACTIONS:
            v.append(f"eye_action: must be one of {EYE_ACTIONS}")
        if self.upper_face not in UPPER_FACE:
            v.append(f"upper_face: must be one of {UPPER_FACE}")
        if self.lower_face not in LOWER_FACE:
            v.append(f"lower_face: must be one of {LOWER_FACE}")
        if not _is_real(self.power) or not (0.0 <= self.power <= 1.0):
            v.append("power: must be in [0, 1]")
        return v


@dataclass(frozen=True)
class TranscriptRecord:
    KIND = "transcript"
    t_start_ms: float
    t_end_ms: float
    speaker: str
    text: str

    @property
    def sort_t(self) -> float:
        return self.t_start_ms

    def to_obj(self) -> dict:
        return {
            "kind": self.KIND,
            "t_start_ms": self.t_start_ms,
            "t_end_ms": self.t_end_ms,
            "speaker": self.speaker,
            "text": self.text,
        }

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_start_ms) or not _is_real(self.t_end_ms):
            v.append("t_start_ms: timestamps must be finite numbers")
        elif self.t_start_ms > self.t_end_ms:
            v.append("t_start_ms: must be <= t_end_ms")
        if self.speaker not in SPEAKERS:
            v.append(f"speaker: must be one of {SPEAKERS}")
        if not isinstance(self.text, str):
            v.append("text: must be a string")
        return v


@dataclass(frozen=True)
class SentimentRecord:
    KIND = "sentiment"
    t_ms: float
    label: str
    scores: tuple[float, ...]  # positive, negative, mixed, neutral

    @property
    def sort_t(self) -> float:
        return self.t_ms

    def to_obj(self) -> dict:
        return {"kind": self.KIND, "t_ms": self.t_ms, "label": self.label, "scores": list(self.scores)}

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_ms):
            v.append("t_ms: must be a finite number")
        if self.label not in SENTIMENT_LABELS:
            v.append(f"label: must be one of {SENTIMENT_LABELS}")
        if len(self.scores) != 4 or any(not _is_real(s) or not (0.0 <= s <= 1.0) for s in self.scores):
            v.append("scores: expected 4 values in [0, 1]")
            return v
        if abs(sum(self.scores) - 1.0) > 1e-6:
            v.append("scores: must sum to 1 within 1e-6")
        best = max(range(4), key=lambda i: (self.scores[i], -i))
        if self.label in SENTIMENT_LABELS and SENTIMENT_LABELS[best] != self.label:
            v.append("scores: label must be the argmax (ties broken by enum order)")
        return v


@dataclass(frozen=True)
class DesReport:
    KIND = "des"
    t_start_ms: float
    t_end_ms: float
    text: str
    terminated: bool = True

    @property
    def sort_t(self) -> float:
        return self.t_start_ms

    def to_obj(self) -> dict:
        return {
            "kind": self.KIND,
            "t_start_ms": self.t_start_ms,
            "t_end_ms": self.t_end_ms,
            "text": self.text,
            "terminated": self.terminated,
        }

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_start_ms) or not _is_real(self.t_end_ms):
            v.append("t_start_ms: timestamps must be finite numbers")
        elif self.t_start_ms > self.t_end_ms:
            v.append("t_start_ms: must be <= t_end_ms")
        if not isinstance(self.text, str):
            v.append("text: must be a string")
        if not isinstance(self.terminated, bool):
            v.append("terminated: must be a boolean")
        return v


@dataclass(frozen=True)
class ImageAnnotation:
    KIND = "image_annotation"
    t_ms: float
    labels: tuple[tuple[str, float], ...] = ()
    texts: tuple[str, ...] = ()
    face_boxes: tuple[tuple[int, int, int, int], ...] = ()

    @property
    def sort_t(self) -> float:
        return self.t_ms

    def to_obj(self) -> dict:
        return {
            "kind": self.KIND,
            "t_ms": self.t_ms,
            "labels": [[name, conf] for name, conf in self.labels],
            "texts": list(self.texts),
            "face_boxes": [list(b) for b in self.face_boxes],
        }

    def check(self) -> list[str]:
        v = []
        if not _is_real(self.t_ms):
            v.append("t_ms: must be a finite number")
        for i, item in enumerate(self.labels):
            if (len(item) != 2 or not isinstance(item[0], str)
                    or not _is_real(item[1]) or not (0.0 <= item[1] <= 1.0)):
                v.append(f"labels[{i}]: must be [name, confidence in [0, 1]]")
        if any(not isinstance(t, str) for t in self.texts):
            v.append("texts: must be strings")
        for i, box in enumerate(self.face_boxes):
            if len(box) != 4 or any(not _is_int(c) for c in box):
                v.append(f"face_boxes[{i}]: must be [x, y, w, h] integers")
                continue
            x, y, w, h = box
            if x < 0 or y < 0 or w < 1 or h < 1 or x + w > IMAGE_WIDTH or y + h > IMAGE_HEIGHT:
                v.append(f"face_boxes[{i}]: must lie inside {IMAGE_WIDTH}x{IMAGE_HEIGHT} image bounds")
        return v


Record = Union[
    EegFrame, GsrSample, MediaRef, BandPowerRecord, CognitionRecord,
    FacialExpressionRecord, TranscriptRecord, SentimentRecord, DesReport,
    ImageAnnotation,
]

# Raw sensor streams are confined to their segment's time window; derived
# records may describe earlier data and therefore only respect the upper
# bound (an analyzer may finish after its source segment was sealed).
RAW_KINDS = ("eeg", "gsr", "image", "audio")
DERIVED_KINDS = ("band_power", "cognition", "facial_expression", "transcript",
                 "sentiment", "des", "image_annotation")
ALL_KINDS = RAW_KINDS + DERIVED_KINDS


def record_kind(record: Record) -> str:
    return record.kind if isinstance(record, MediaRef) else type(record).KIND


_FIELD_SPECS: dict[str, tuple[type, tuple[str, ...]]] = {
    "eeg": (EegFrame, ("t_ms", "channels")),
    "gsr": (GsrSample, ("t_ms", "value")),
    "image": (MediaRef, ("t_ms", "path", "digest")),
    "audio": (MediaRef, ("t_ms", "path", "digest", "duration_ms")),
    "band_power": (BandPowerRecord, ("t_ms", "per_channel", "avg")),
    "cognition": (CognitionRecord, ("t_ms",) + CognitionRecord.METRICS),
    "facial_expression": (FacialExpressionRecord, ("t_ms", "eye_action", "upper_face", "lower_face", "power")),
    "transcript": (TranscriptRecord, ("t_start_ms", "t_end_ms", "speaker", "text")),
    "sentiment": (SentimentRecord, ("t_ms", "label", "scores")),
    "des": (DesReport, ("t_start_ms", "t_end_ms", "text", "terminated")),
    "image_annotation": (ImageAnnotation, ("t_ms", "labels", "texts", "face_boxes")),
}


def record_from_obj(obj: Any, where: str = "record") -> Record:
    """Build a record from its tagged JSON object; unknown fields rejected."""
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: must be an object")
    kind = obj.get("kind")
    if kind not in _FIELD_SPECS:
        raise ValidationError(f"{where}.kind: unknown record kind {kind!r}")
    cls, fields = _FIELD_SPECS[kind]
    missing = [f for f in fields if f not in obj]
    extra = set(obj) - set(fields) - {"kind"}
    if missing:
        raise ValidationError(f"{where}.{missing[0]}: required for kind {kind}")
    if extra:
        raise ValidationError(f"{where}: unknown fields {sorted(extra)} for kind {kind}")
    try:
        if kind in ("image", "audio"):
            return MediaRef(
                t_ms=obj["t_ms"], kind=kind, path=obj["path"], digest=obj["digest"],
                duration_ms=obj.get("duration_ms"),
            )
        if kind == "eeg":
            return EegFrame(t_ms=obj["t_ms"], channels=tuple(obj["channels"]))
        if kind == "band_power":
            return BandPowerRecord(
                t_ms=obj["t_ms"],
                per_channel=tuple(tuple(row) for row in obj["per_channel"]),
                avg=tuple(obj["avg"]),
            )
        if kind == "sentiment":
            return SentimentRecord(t_ms=obj["t_ms"], label=obj["label"], scores=tuple(obj["scores"]))
        if kind == "image_annotation":
            return ImageAnnotation(
                t_ms=obj["t_ms"],
                labels=tuple((str(n), c) for n, c in obj["labels"]),
                texts=tuple(obj["texts"]),
                face_boxes=tuple(tuple(b) for b in obj["face_boxes"]),
            )
        kwargs = {f: obj[f] for f in fields}
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: malformed {kind} record ({exc})") from exc


# ---------------------------------------------------------------------------
# Segment files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SegmentFile:
    session_id: str
    segment_index: int
    prev_attestation: str
    start_ms: int
    end_ms: int
    records: tuple[Record, ...]
    schema_version: str = SCHEMA_VERSION

    def to_obj(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "session_id": self.session_id,
            "segment_index": self.segment_index,
            "prev_attestation": self.prev_attestation,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "records": [r.to_obj() for r in self.records],
        }


def validate_segment(segment: SegmentFile) -> list[str]:
    """Return all invariant violations (empty list when valid)."""
    v = []
    if segment.schema_version != SCHEMA_VERSION:
        v.append(f"schema_version: expected {SCHEMA_VERSION!r}")
    if not isinstance(segment.session_id, str) or not _SESSION_ID.match(segment.session_id):
        v.append("session_id: must match [A-Za-z0-9][A-Za-z0-9._-]{0,63}")
    if not _is_int(segment.segment_index) or segment.segment_index < 0:
        v.append("segment_index: must be a non-negative integer")
    prev_ok = isinstance(segment.prev_attestation, str) and (
        _HEX64.match(segment.prev_attestation) or segment.prev_attestation == PENDING_ATTESTATION)
    if not prev_ok:
        v.append("prev_attestation: must be 64 lowercase hex chars or the PENDING sentinel")
    if segment.segment_index == 0 and segment.prev_attestation != GENESIS_ATTESTATION:
        v.append("prev_attestation: segment 0 must carry the genesis attestation (64 zeros)")
    if not _is_int(segment.start_ms) or not _is_int(segment.end_ms) or segment.start_ms >= segment.end_ms:
        v.append("start_ms: must be integers with start_ms < end_ms")
        return v

    prev_t = None
    for i, rec in enumerate(segment.records):
        kind = record_kind(rec)
        for issue in rec.check():
            v.append(f"records[{i}].{issue}")
        t = rec.sort_t
        if not _is_real(t):
            continue
        if prev_t is not None and t < prev_t:
            v.append(f"records[{i}].t_ms: out of order ({t} after {prev_t})")
        prev_t = t
        if kind in RAW_KINDS:
            if not (segment.start_ms <= t < segment.end_ms):
                v.append(f"records[{i}].t_ms: raw record outside segment window "
                         f"[{segment.start_ms}, {segment.end_ms})")
        elif t >= segment.end_ms:
            v.append(f"records[{i}].t_ms: derived record at or beyond segment end {segment.end_ms}")
    return v


def _canonical(value: Any) -> Any:
    """Normalize numbers so equal values serialize to equal bytes.

    Integral floats collapse to ints (0.0 and -0.0 become 0); non-finite
    numbers are rejected upstream by validation and by ``allow_nan=False``.
    """
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        return int(value) if value.is_integer() else value
    if isinstance(value, dict):
        return {k: _canonical(x) for k, x in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(x) for x in value]
    return value


def canonical_json_bytes(obj: Any) -> bytes:
    return json.dumps(
        _canonical(obj), sort_keys=True, separators=(",", ":"),
        ensure_ascii=False, allow_nan=False,
    ).encode("utf-8")


def serialize_segment(segment: SegmentFile) -> bytes:
    violations = validate_segment(segment)
    if violations:
        raise ValidationError("segment violates invariants", violations)
    return canonical_json_bytes(segment.to_obj())


def parse_segment(data: bytes) -> SegmentFile:
    """Inverse of :func:`serialize_segment`; strict about shape and fields."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8 at byte {exc.start}", offset=exc.start) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg} at byte {exc.pos}", offset=exc.pos) from exc
    if not isinstance(obj, dict):
        raise ValidationError("segment: must be a JSON object")
    fields = ("schema_version", "session_id", "segment_index", "prev_attestation",
              "start_ms", "end_ms", "records")
    missing = [f for f in fields if f not in obj]
    if missing:
        raise ValidationError(f"segment.{missing[0]}: required")
    extra = set(obj) - set(fields)
    if extra:
        raise ValidationError(f"segment: unknown fields {sorted(extra)}")
    if not isinstance(obj["records"], list):
        raise ValidationError("segment.records: must be an array")
    records = tuple(
        record_from_obj(r, where=f"segment.records[{i}]") for i, r in enumerate(obj["records"])
    )
    return SegmentFile(
        session_id=obj["session_id"],
        segment_index=obj["segment_index"],
        prev_attestation=obj["prev_attestation"],
        start_ms=obj["start_ms"],
        end_ms=obj["end_ms"],
        records=records,
        schema_version=obj["schema_version"],
    )


# ---------------------------------------------------------------------------
# Session directory layout and timeline queries
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"
MEDIA_DIR = "media"


def session_dir(data_dir: Path | str, session_id: str) -> Path:
    return Path(data_dir) / session_id


def segment_filename(index: int) -> str:
    return f"segment_{index:05d}.json"


def image_media_path(t_ms: int) -> str:
    return f"{MEDIA_DIR}/img_{t_ms}.ppm"


def audio_media_path(t_ms: int) -> str:
    return f"{MEDIA_DIR}/aud_{t_ms}.wav"


def write_manifest(directory: Path, manifest: SessionManifest) -> None:
    tmp = directory / (MANIFEST_NAME + ".tmp")
    tmp.write_bytes(canonical_json_bytes(manifest.to_obj()))
    tmp.replace(directory / MANIFEST_NAME)


def read_manifest(directory: Path) -> SessionManifest:
    path = directory / MANIFEST_NAME
    if not path.is_file():
        raise NotFoundError(f"no session manifest at {path}")
    obj = json.loads(path.read_bytes())
    obj.pop("schema_version", None)
    return SessionManifest.from_obj(obj)


@dataclass
class Session:
    """A recorded session on disk (sealed or still recording)."""

    directory: Path
    manifest: SessionManifest

    def segment_path(self, index: int) -> Path:
        return self.directory / segment_filename(index)

    def segment(self, index: int) -> SegmentFile:
        path = self.segment_path(index)
        if not path.is_file():
            raise NotFoundError(f"segment {index} missing from {self.directory}")
        return parse_segment(path.read_bytes())

    def segments(self) -> Iterator[SegmentFile]:
        for i in range(self.manifest.segment_count):
            yield self.segment(i)

    def media_bytes(self, rel_path: str) -> bytes:
        if ".." in rel_path or rel_path.startswith("/") or not rel_path.startswith(MEDIA_DIR + "/"):
            raise NotFoundError(f"invalid media path {rel_path!r}")
        path = self.directory / rel_path
        if not path.is_file():
            raise NotFoundError(f"no media file {rel_path!r}")
        return path.read_bytes()


def load_session(data_dir: Path | str, session_id: str) -> Session:
    directory = session_dir(data_dir, session_id)
    if not directory.is_dir():
        raise NotFoundError(f"unknown session {session_id!r}")
    return Session(directory=directory, manifest=read_manifest(directory))


def timeline_query(
    session: Session,
    t0_ms: float,
    t1_ms: float,
    kinds: Sequence[str] | None = None,
    extra_records: Sequence[Record] = (),
) -> list[Record]:
    """Records with ``t0 <= t < t1`` of the requested kinds, time-ordered.

    Records spanning an interval (transcripts, DES reports) are selected by
    their start time.  ``extra_records`` lets the live service include its
    open segment buffer.  Results are sorted by time, then kind name.
    """
    if not _is_real(t0_ms) or not _is_real(t1_ms) or t0_ms > t1_ms:
        raise ValidationError("t0_ms: must be <= t1_ms")
    if kinds is not None:
        kinds = tuple(kinds)
        unknown = [k for k in kinds if k not in ALL_KINDS]
        if unknown:
            raise ValidationError(f"kinds: unknown record kinds {unknown}")
    wanted = set(kinds) if kinds is not None else set(ALL_KINDS)

    out: list[Record] = []

    def take(records: Sequence[Record]) -> None:
        for rec in records:
            t = rec.sort_t
            if t0_ms <= t < t1_ms and record_kind(rec) in wanted:
                out.append(rec)

    for seg in session.segments():
        if seg.end_ms <= t0_ms:
            continue  # all record times are < end_ms
        take(seg.records)
    take(extra_records)
    out.sort(key=lambda r: (r.sort_t, record_kind(r)))
    return out
