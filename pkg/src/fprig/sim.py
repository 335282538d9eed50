"""Network sensor simulator: the desk-scale stand-in for the wearable rig.

A :class:`Scenario` scripts every stream deterministically: EEG as a sum of
windowed sinusoids plus seeded uniform noise, GSR as step events decaying on
a baseline, images as seeded synthetic frames with textured face regions,
and audio as tone-coded speech whose ground-truth transcript travels in a
sidecar.  :func:`run_scenario` streams the generated data to an ingestion
endpoint in timestamp order and reports what was sent and acknowledged.

Every generator is a pure function of (scenario, seed, window): EEG noise is
drawn from a counter-based generator keyed by frame index, so any window of
any run reproduces bit-identically.
"""

from __future__ import annotations

import hashlib
import io
import math
import uuid
import wave
from dataclasses import dataclass, field
import numpy as np

from .des import schedule_tones
from .errors import ConfigurationError
from .model import (
    EEG_CHANNELS,
    IMAGE_HEIGHT,
    IMAGE_WIDTH,
    INT16_MAX,
    INT16_MIN,
    EegFrame,
    GsrSample,
    SessionConfig,
)

AUDIO_RATE_HZ = 16000
AUDIO_CHUNK_MS = 5000
SPEECH_BASE_MS = 300
SPEECH_MS_PER_CHAR = 60

GSR_DECAY_TAU_MS = 10000.0

_EEG_TAG = 0xEE6
_IMG_TAG = 0x16E


@dataclass(frozen=True)
class EegTone:
    freq_hz: float
    amplitude: float
    channels: tuple[int, ...] | None = None  # None = all channels
    t_start_ms: int = 0
    t_end_ms: int | None = None  # None = scenario end


@dataclass(frozen=True)
class GsrEvent:
    t_ms: int
    delta: float


@dataclass(frozen=True)
class SpeechLine:
    t_start_ms: int
    speaker: str
    text: str

    @property
    def duration_ms(self) -> int:
        return SPEECH_BASE_MS + SPEECH_MS_PER_CHAR * len(self.text)

    @property
    def t_end_ms(self) -> int:
        return self.t_start_ms + self.duration_ms


@dataclass(frozen=True)
class ImageSpec:
    t_ms: int
    scene: str = ""
    face_boxes: tuple[tuple[int, int, int, int], ...] = ()
    texts: tuple[str, ...] = ()
    labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExpressionEvent:
    t_ms: int
    eye_action: str = "neutral"
    upper_face: str = "neutral"
    lower_face: str = "neutral"
    power: float = 0.0


@dataclass
class Scenario:
    duration_ms: int
    eeg_tones: tuple[EegTone, ...] = ()
    noise_amplitude: float = 0.0
    gsr_baseline: float = 2.0
    gsr_events: tuple[GsrEvent, ...] = ()
    speech_script: tuple[SpeechLine, ...] = ()
    image_script: tuple[ImageSpec, ...] = ()
    expression_script: tuple[ExpressionEvent, ...] = ()
    rng_seed: int = 0

    def validate(self, eeg_rate_hz: int = 128) -> None:
        if self.duration_ms < 0:
            raise ConfigurationError("duration_ms: must be >= 0")
        if self.noise_amplitude < 0:
            raise ConfigurationError("noise_amplitude: must be >= 0")
        nyquist = eeg_rate_hz / 2.0
        for tone in self.eeg_tones:
            if not (0.0 < tone.freq_hz < nyquist):
                raise ConfigurationError(
                    f"eeg_tones: frequency {tone.freq_hz} Hz outside (0, {nyquist}) Hz")
            if tone.channels is not None and any(
                    not (0 <= c < EEG_CHANNELS) for c in tone.channels):
                raise ConfigurationError("eeg_tones: channel index out of range")
            if not (0 <= tone.t_start_ms < max(self.duration_ms, 1)):
                raise ConfigurationError("eeg_tones: t_start_ms outside scenario")
        for ev in self.gsr_events:
            if not (0 <= ev.t_ms < max(self.duration_ms, 1)):
                raise ConfigurationError("gsr_events: t_ms outside scenario")
        for spec in self.image_script:
            if not (0 <= spec.t_ms < max(self.duration_ms, 1)):
                raise ConfigurationError("image_script: t_ms outside scenario")
            for box in spec.face_boxes:
                x, y, w, h = box
                if x < 0 or y < 0 or w < 1 or h < 1 or x + w > IMAGE_WIDTH or y + h > IMAGE_HEIGHT:
                    raise ConfigurationError(
                        f"image_script: face box {box} outside {IMAGE_WIDTH}x{IMAGE_HEIGHT} bounds")
        by_speaker: dict[str, list[SpeechLine]] = {}
        for line in self.speech_script:
            if line.speaker not in ("wearer", "other"):
                raise ConfigurationError(f"speech_script: unknown speaker {line.speaker!r}")
            if not (0 <= line.t_start_ms < max(self.duration_ms, 1)):
                raise ConfigurationError("speech_script: t_start_ms outside scenario")
            by_speaker.setdefault(line.speaker, []).append(line)
        for speaker, lines in by_speaker.items():
            lines.sort(key=lambda l: l.t_start_ms)
            for a, b in zip(lines, lines[1:]):
                if b.t_start_ms < a.t_end_ms:
                    raise ConfigurationError(
                        f"speech_script: overlapping {speaker} lines at {a.t_start_ms} and {b.t_start_ms}")
        for ev in self.expression_script:
            if not (0 <= ev.t_ms < max(self.duration_ms, 1)):
                raise ConfigurationError("expression_script: t_ms outside scenario")

    def to_obj(self) -> dict:
        return {
            "duration_ms": self.duration_ms,
            "eeg_tones": [
                {"freq_hz": t.freq_hz, "amplitude": t.amplitude,
                 "channels": list(t.channels) if t.channels is not None else None,
                 "t_start_ms": t.t_start_ms, "t_end_ms": t.t_end_ms}
                for t in self.eeg_tones],
            "noise_amplitude": self.noise_amplitude,
            "gsr_baseline": self.gsr_baseline,
            "gsr_events": [{"t_ms": e.t_ms, "delta": e.delta} for e in self.gsr_events],
            "speech_script": [
                {"t_start_ms": l.t_start_ms, "speaker": l.speaker, "text": l.text}
                for l in self.speech_script],
            "image_script": [
                {"t_ms": s.t_ms, "scene": s.scene, "face_boxes": [list(b) for b in s.face_boxes],
                 "texts": list(s.texts), "labels": list(s.labels)}
                for s in self.image_script],
            "expression_script": [
                {"t_ms": e.t_ms, "eye_action": e.eye_action, "upper_face": e.upper_face,
                 "lower_face": e.lower_face, "power": e.power}
                for e in self.expression_script],
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Scenario":
        if not isinstance(obj, dict) or "duration_ms" not in obj:
            raise ConfigurationError("scenario: duration_ms is required")
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"scenario: unknown fields {sorted(unknown)}")
        try:
            return cls(
                duration_ms=obj["duration_ms"],
                eeg_tones=tuple(
                    EegTone(freq_hz=t["freq_hz"], amplitude=t["amplitude"],
                            channels=tuple(t["channels"]) if t.get("channels") is not None else None,
                            t_start_ms=t.get("t_start_ms", 0), t_end_ms=t.get("t_end_ms"))
                    for t in obj.get("eeg_tones", ())),
                noise_amplitude=obj.get("noise_amplitude", 0.0),
                gsr_baseline=obj.get("gsr_baseline", 2.0),
                gsr_events=tuple(GsrEvent(e["t_ms"], e["delta"]) for e in obj.get("gsr_events", ())),
                speech_script=tuple(
                    SpeechLine(l["t_start_ms"], l["speaker"], l["text"])
                    for l in obj.get("speech_script", ())),
                image_script=tuple(
                    ImageSpec(t_ms=s["t_ms"], scene=s.get("scene", ""),
                              face_boxes=tuple(tuple(b) for b in s.get("face_boxes", ())),
                              texts=tuple(s.get("texts", ())), labels=tuple(s.get("labels", ())))
                    for s in obj.get("image_script", ())),
                expression_script=tuple(
                    ExpressionEvent(t_ms=e["t_ms"], eye_action=e.get("eye_action", "neutral"),
                                    upper_face=e.get("upper_face", "neutral"),
                                    lower_face=e.get("lower_face", "neutral"),
                                    power=e.get("power", 0.0))
                    for e in obj.get("expression_script", ())),
                rng_seed=obj.get("rng_seed", 0),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"scenario: malformed field ({exc})") from exc


def _philox_key(seed: int, tag: int) -> int:
    words = np.random.SeedSequence([seed & (2 ** 64 - 1), tag]).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


# ---------------------------------------------------------------------------
# Stream generators
# ---------------------------------------------------------------------------


def eeg_frame_times_ms(t0_ms: float, t1_ms: float, rate_hz: int = 128) -> tuple[int, int]:
    """Frame index range [n0, n1) whose times n*1000/rate fall in [t0, t1)."""
    n0 = math.ceil(t0_ms * rate_hz / 1000)
    n1 = math.ceil(t1_ms * rate_hz / 1000)
    return n0, n1


def gen_eeg(scenario: Scenario, t0_ms: float, t1_ms: float, rate_hz: int = 128) -> list[EegFrame]:
    """EEG frames covering [t0, t1) on the exact 1/rate grid.

    Channel value = round(sum of active tones + noise_amplitude * u) clamped
    to the signed 16-bit range, where u is uniform in [-1, 1] drawn from a
    counter-based generator keyed by frame index (window-split invariant).
    """
    if not (t0_ms < t1_ms <= scenario.duration_ms):
        raise ConfigurationError(f"window [{t0_ms}, {t1_ms}) outside scenario duration")
    scenario.validate(rate_hz)
    n0, n1 = eeg_frame_times_ms(t0_ms, t1_ms, rate_hz)
    count = n1 - n0
    if count <= 0:
        return []
    idx = np.arange(n0, n1, dtype=np.int64)
    t_s = idx / rate_hz
    t_ms = idx * (1000.0 / rate_hz)

    signal = np.zeros((count, EEG_CHANNELS))
    for tone in scenario.eeg_tones:
        end = scenario.duration_ms if tone.t_end_ms is None else tone.t_end_ms
        active = (t_ms >= tone.t_start_ms) & (t_ms < end)
        if not active.any():
            continue
        waveform = tone.amplitude * np.sin(2.0 * np.pi * tone.freq_hz * t_s[active])
        cols = range(EEG_CHANNELS) if tone.channels is None else tone.channels
        for c in cols:
            signal[active, c] += waveform

    if scenario.noise_amplitude > 0:
        # 16 doubles per frame = 4 Philox blocks; counter 4*n addresses frame n.
        bitgen = np.random.Philox(key=_philox_key(scenario.rng_seed, _EEG_TAG),
                                  counter=[4 * n0, 0, 0, 0])
        u = np.random.Generator(bitgen).random(16 * count).reshape(count, 16)[:, :EEG_CHANNELS]
        signal += scenario.noise_amplitude * (2.0 * u - 1.0)

    values = np.clip(np.rint(signal), INT16_MIN, INT16_MAX).astype(np.int64)
    return [
        EegFrame(t_ms=float(t), channels=tuple(int(v) for v in row))
        for t, row in zip(t_ms, values)
    ]


def gsr_value_at(scenario: Scenario, t_ms: float) -> float:
    """Closed-form GSR level: baseline plus decaying step events, floored at 0."""
    value = scenario.gsr_baseline
    for ev in scenario.gsr_events:
        if ev.t_ms <= t_ms:
            value += ev.delta * math.exp(-(t_ms - ev.t_ms) / GSR_DECAY_TAU_MS)
    return max(value, 0.0)


def gen_gsr(scenario: Scenario, t0_ms: float, t1_ms: float, period_ms: int = 1000) -> list[GsrSample]:
    k0 = math.ceil(t0_ms / period_ms)
    k1 = math.ceil(t1_ms / period_ms)
    samples = []
    for k in range(k0, k1):
        t = k * period_ms
        samples.append(GsrSample(t_ms=t, value=gsr_value_at(scenario, t)))
    return samples


def _image_spec_at(scenario: Scenario, t_ms: int) -> ImageSpec:
    for spec in scenario.image_script:
        if spec.t_ms == t_ms:
            return spec
    return ImageSpec(t_ms=t_ms)


def gen_image(scenario: Scenario, t_ms: int) -> tuple[bytes, dict]:
    """One synthetic 320x240 PPM frame plus its sidecar truth entry.

    The background is a near-flat seeded gradient; face boxes are painted
    with full-range seeded noise so they are high-variance regions; scripted
    text strings become striped marker bars (their content only matters via
    the sidecar).
    """
    spec = _image_spec_at(scenario, t_ms)
    for box in spec.face_boxes:
        x, y, w, h = box
        if x < 0 or y < 0 or w < 1 or h < 1 or x + w > IMAGE_WIDTH or y + h > IMAGE_HEIGHT:
            raise ConfigurationError(f"face box {box} outside image bounds")
    scene_hash = int.from_bytes(hashlib.sha256(spec.scene.encode("utf-8")).digest()[:8], "big")
    rng = np.random.default_rng(np.random.SeedSequence(
        [scenario.rng_seed & (2 ** 64 - 1), _IMG_TAG, int(t_ms), scene_hash]))

    base = rng.integers(48, 208, size=3)
    ramp = (np.arange(IMAGE_WIDTH) * 20) // IMAGE_WIDTH - 10
    row = np.clip(base[None, :] + ramp[:, None], 0, 255).astype(np.uint8)  # (W, 3)
    pixels = np.repeat(row[None, :, :], IMAGE_HEIGHT, axis=0).copy()

    y_cursor = 4
    for text in spec.texts:
        color = list(hashlib.sha256(text.encode("utf-8")).digest()[:3])
        width = min(8 * max(len(text), 1), IMAGE_WIDTH - 8)
        bar = pixels[y_cursor:y_cursor + 8, 4:4 + width]
        bar[:, 0::4] = color
        bar[:, 2::4] = 0
        y_cursor += 12
        if y_cursor + 8 > IMAGE_HEIGHT:
            break

    for x, y, w, h in spec.face_boxes:
        pixels[y:y + h, x:x + w] = rng.integers(0, 256, size=(h, w, 3), dtype=np.int64)

    header = f"P6\n{IMAGE_WIDTH} {IMAGE_HEIGHT}\n255\n".encode("ascii")
    sidecar = {
        "labels": list(spec.labels),
        "texts": list(spec.texts),
        "face_boxes": [list(b) for b in spec.face_boxes],
    }
    return header + pixels.tobytes(), sidecar


def gen_audio(scenario: Scenario, t0_ms: int, t1_ms: int) -> tuple[bytes, dict]:
    """Mono 16 kHz 16-bit PCM WAV for [t0, t1) plus sidecar transcript.

    Speech lines are synthesized as tones (frequency keyed by speaker and
    text); the intelligible content lives only in the sidecar, whose line
    times are chunk-relative.
    """
    scenario.validate()
    n_samples = (t1_ms - t0_ms) * AUDIO_RATE_HZ // 1000
    acc = np.zeros(n_samples, dtype=np.int32)
    sidecar_lines = []
    for line in scenario.speech_script:
        start, end = line.t_start_ms, line.t_end_ms
        if t0_ms <= start < t1_ms:
            sidecar_lines.append({
                "t_start_ms": start - t0_ms,
                "t_end_ms": end - t0_ms,
                "speaker": line.speaker,
                "text": line.text,
            })
        ov0, ov1 = max(start, t0_ms), min(end, t1_ms)
        if ov0 >= ov1:
            continue
        key = hashlib.sha256(f"{line.speaker}:{line.text}".encode("utf-8")).digest()
        freq = 160 + int.from_bytes(key[:4], "big") % 640
        i0 = (ov0 - t0_ms) * AUDIO_RATE_HZ // 1000
        i1 = (ov1 - t0_ms) * AUDIO_RATE_HZ // 1000
        rel_s = ((np.arange(i0, i1) / AUDIO_RATE_HZ) + (t0_ms - start) / 1000.0)
        acc[i0:i1] += (8000.0 * np.sin(2.0 * np.pi * freq * rel_s)).astype(np.int32)
    pcm = np.clip(acc, INT16_MIN, INT16_MAX).astype("<i2")

    buf = io.BytesIO()
    with wave.open(buf, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(AUDIO_RATE_HZ)
        wav.writeframes(pcm.tobytes())
    return buf.getvalue(), {"lines": sidecar_lines}


# ---------------------------------------------------------------------------
# Scenario run: stream everything to an ingestion endpoint
# ---------------------------------------------------------------------------


@dataclass
class TransmissionSummary:
    session_id: str
    sent: dict[str, int] = field(default_factory=dict)
    acked_ok: int = 0
    acked_duplicate: int = 0
    des_tones_scheduled: int = 0
    manifest: dict | None = None


_STREAM_ORDER = {"eeg": 0, "gsr": 1, "image": 2, "audio": 3}


def build_envelopes(scenario: Scenario, config: SessionConfig,
                    audio_chunk_ms: int = AUDIO_CHUNK_MS) -> list[dict]:
    """All wire envelopes for a scenario, in timestamp order, seq assigned."""
    events: list[tuple[float, int, dict]] = []

    for frame in gen_eeg(scenario, 0, scenario.duration_ms, config.eeg_rate_hz) \
            if scenario.duration_ms > 0 else []:
        events.append((frame.t_ms, _STREAM_ORDER["eeg"], {
            "stream": "eeg", "t_ms": frame.t_ms,
            "payload": {"channels": list(frame.channels)},
        }))
    for sample in gen_gsr(scenario, 0, scenario.duration_ms, config.gsr_period_ms):
        events.append((sample.t_ms, _STREAM_ORDER["gsr"], {
            "stream": "gsr", "t_ms": sample.t_ms,
            "payload": {"value": sample.value},
        }))
    for t in range(0, scenario.duration_ms, config.image_period_ms):
        image, sidecar = gen_image(scenario, t)
        events.append((t, _STREAM_ORDER["image"], {
            "stream": "image", "t_ms": t,
            "payload": {"data_b64": _b64(image), "sidecar": sidecar},
        }))
    for t in range(0, scenario.duration_ms, audio_chunk_ms):
        end = min(t + audio_chunk_ms, scenario.duration_ms)
        audio, sidecar = gen_audio(scenario, t, end)
        events.append((t, _STREAM_ORDER["audio"], {
            "stream": "audio", "t_ms": t,
            "payload": {"data_b64": _b64(audio), "duration_ms": end - t, "sidecar": sidecar},
        }))

    events.sort(key=lambda e: (e[0], e[1]))
    seq: dict[str, int] = {}
    envelopes = []
    for _, _, env in events:
        stream = env["stream"]
        seq[stream] = seq.get(stream, 0) + 1
        env["seq"] = seq[stream]
        envelopes.append(env)
    return envelopes


def _b64(data: bytes) -> str:
    import base64

    return base64.b64encode(data).decode("ascii")


def run_scenario(scenario: Scenario, client, config: SessionConfig | None = None,
                 batch_size: int = 256) -> TransmissionSummary:
    """Start a session, stream the whole scenario, stop, and summarize.

    ``client`` is an ingest client (local or HTTP); see ``fprig.client``.
    The scenario's expression script rides along in the session's provider
    configuration so the expression analyzer can replay it.
    """
    scenario.validate()
    if config is None:
        config = SessionConfig(
            session_id=f"sim-{uuid.uuid4().hex[:12]}",
            rng_seed=scenario.rng_seed,
        )
    if scenario.expression_script and "expression" not in config.providers:
        providers = dict(config.providers)
        providers["expression"] = {
            "kind": "reference",
            "script": [
                {"t_ms": e.t_ms, "eye_action": e.eye_action, "upper_face": e.upper_face,
                 "lower_face": e.lower_face, "power": e.power}
                for e in scenario.expression_script],
        }
        config = SessionConfig(**{**config.to_obj(), "providers": providers})

    client.start(config)
    summary = TransmissionSummary(session_id=config.session_id)
    envelopes = build_envelopes(scenario, config)
    for env in envelopes:
        summary.sent[env["stream"]] = summary.sent.get(env["stream"], 0) + 1
    for i in range(0, len(envelopes), batch_size):
        acks = client.ingest(config.session_id, envelopes[i:i + batch_size])
        for ack in acks:
            if ack["status"] == "duplicate":
                summary.acked_duplicate += 1
            else:
                summary.acked_ok += 1
    manifest = client.stop(config.session_id)
    summary.des_tones_scheduled = len(
        schedule_tones(config, scenario.duration_ms).times_ms)
    summary.manifest = manifest
    return summary
