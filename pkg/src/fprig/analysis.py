"""Derived-stream analyzers: EEG band power, cognition metrics, arousal,
face blurring, and deterministic reference providers for the streams a real
deployment would delegate to remote services.

Band power uses a 2 s Hann-windowed periodogram per channel.  The scaling
``2 / (n * sum(w**2))`` makes a bin-aligned sinusoid of amplitude A carry a
band power of exactly A**2 / 2 (its mean-square power), which is what a
plain rectangular DFT measures for the same samples, so the two can be
compared directly.  Cognition metrics are deterministic band-ratio
references standing in for a proprietary headset API; the provider
interface lets a remote service replace any reference analyzer.
"""

from __future__ import annotations

import base64
import json
import re
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    ParseError,
    ProviderError,
    TransportError,
    ValidationError,
)
from .model import (
    BAND_NAMES,
    EEG_CHANNELS,
    IMAGE_HEIGHT,
    IMAGE_WIDTH,
    BandPowerRecord,
    CognitionRecord,
    EegFrame,
    FacialExpressionRecord,
    GsrSample,
    ImageAnnotation,
    SentimentRecord,
    TranscriptRecord,
)

# Band edges in Hz, consumer-headset convention: [low, high) per band.
BAND_EDGES = {
    "theta": (4.0, 8.0),
    "alpha": (8.0, 12.0),
    "betaL": (12.0, 16.0),
    "betaH": (16.0, 25.0),
    "gamma": (25.0, 45.0),
}

BAND_WINDOW_S = 2.0  # analysis window length
BAND_STEP_MS = 1000  # emission cadence (50% overlap)

GSR_NORM_WINDOW_MS = 60000
GSR_DECAY_TAU_MS = 10000.0

_EPS = 1e-12


# ---------------------------------------------------------------------------
# EEG band power
# ---------------------------------------------------------------------------


def band_power(frames: Sequence[EegFrame], rate_hz: int = 128) -> BandPowerRecord:
    """Per-channel band power of one analysis window.

    ``frames`` must cover exactly one window (``2 * rate_hz`` frames).  Each
    channel is Hann-windowed, transformed, and summed over the bins of each
    band; ``avg`` is the channel mean per band.  The record's ``t_ms`` is
    the window start.
    """
    n = int(BAND_WINDOW_S * rate_hz)
    if len(frames) != n:
        raise ValidationError(f"frames: expected {n} frames for a {BAND_WINDOW_S:.0f} s window, got {len(frames)}")
    x = np.asarray([f.channels for f in frames], dtype=np.float64)  # (n, channels)
    # Periodic Hann: a bin-aligned tone leaks into exactly +-1 bin.
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    spectrum = np.fft.rfft(x * w[:, None], axis=0)
    scale = 2.0 / (n * np.sum(w * w))
    psd = (spectrum.real ** 2 + spectrum.imag ** 2) * scale
    psd[0] *= 0.5
    if n % 2 == 0:
        psd[-1] *= 0.5
    freqs = np.fft.rfftfreq(n, d=1.0 / rate_hz)

    per_channel = np.empty((EEG_CHANNELS, len(BAND_NAMES)))
    for b, name in enumerate(BAND_NAMES):
        lo, hi = BAND_EDGES[name]
        mask = (freqs >= lo) & (freqs < hi)
        per_channel[:, b] = psd[mask].sum(axis=0)
    avg = per_channel.mean(axis=0)
    return BandPowerRecord(
        t_ms=frames[0].t_ms,
        per_channel=tuple(tuple(row) for row in per_channel.tolist()),
        avg=tuple(avg.tolist()),
    )


# ---------------------------------------------------------------------------
# GSR normalization, cognition metrics, arousal proxy
# ---------------------------------------------------------------------------


def normalize_gsr(history: Sequence[GsrSample], current: float) -> float:
    """Min-max position of ``current`` within the trailing window.

    ``history`` is the trailing-60 s sample window (the caller slices it).
    An empty or constant window maps to 0.5 by convention.
    """
    values = [s.value for s in history]
    if not values:
        return 0.5
    lo = min(min(values), current)
    hi = max(max(values), current)
    if hi <= lo:
        return 0.5
    return (current - lo) / (hi - lo)


def _squash(x: float) -> float:
    return x / (1.0 + x)


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def cognition_metrics(bp: BandPowerRecord, g: float) -> CognitionRecord:
    """Deterministic cognition reference from band ratios and normalized GSR.

    All six outputs are in [0, 1] by construction: ratios pass through
    ``x / (1 + x)`` and the two GSR-coupled metrics are clamped affine
    blends (0.5 * squashed ratio + 0.5 * g).
    """
    theta, alpha, beta_l, beta_h, _gamma = bp.avg
    engagement = _squash((beta_l + beta_h) / (alpha + theta + _EPS))
    relaxation = _squash(alpha / (beta_l + beta_h + _EPS))
    interest = _squash(beta_l / (alpha + _EPS))
    focus = _squash(beta_l / (theta + _EPS))
    excitement = _clamp01(0.5 * _squash(beta_h / (alpha + _EPS)) + 0.5 * g)
    stress = _clamp01(0.5 * _squash(beta_h / (alpha + theta + _EPS)) + 0.5 * g)
    return CognitionRecord(
        t_ms=bp.t_ms,
        engagement=engagement,
        excitement=excitement,
        stress=stress,
        relaxation=relaxation,
        interest=interest,
        focus=focus,
    )


def arousal_proxy(c: CognitionRecord) -> float:
    """Arousal in [-2.5, 2.5]: affine map of mean(excitement, stress)."""
    return 5.0 * ((c.excitement + c.stress) / 2.0) - 2.5


# ---------------------------------------------------------------------------
# PPM image codec and face blurring
# ---------------------------------------------------------------------------


def decode_ppm(data: bytes) -> np.ndarray:
    """Binary PPM (P6, maxval 255) to a (H, W, 3) uint8 array."""
    if not data.startswith(b"P6"):
        raise ParseError("image: not a binary PPM (P6)")
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3 and pos < len(data):
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isdigit():
            end = pos
            while end < len(data) and data[end:end + 1].isdigit():
                end += 1
            tokens.append(int(data[pos:end]))
            pos = end
        else:
            raise ParseError(f"image: malformed PPM header at byte {pos}", offset=pos)
    if len(tokens) < 3 or tokens[2] != 255:
        raise ParseError("image: PPM header must be width height 255")
    width, height = tokens[0], tokens[1]
    pos += 1  # single whitespace after maxval
    raw = data[pos:pos + width * height * 3]
    if len(raw) != width * height * 3:
        raise ParseError("image: truncated PPM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(pixels: np.ndarray) -> bytes:
    height, width = pixels.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return header + pixels.astype(np.uint8).tobytes()


def clip_box(box: Sequence[int], width: int = IMAGE_WIDTH, height: int = IMAGE_HEIGHT) -> tuple[int, int, int, int] | None:
    """Clip (x, y, w, h) to the image; None when nothing remains."""
    x, y, w, h = (int(v) for v in box)
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, width), min(y + h, height)
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


_BLUR_KERNEL = 11
_BLUR_PASSES = 3


def _box_mean_pass(region: np.ndarray) -> np.ndarray:
    """One 11x11 box-mean pass over an int64 region, edges clamped."""
    r = _BLUR_KERNEL // 2
    padded = np.pad(region, ((r, r), (r, r), (0, 0)), mode="edge")
    integral = np.zeros(
        (padded.shape[0] + 1, padded.shape[1] + 1, padded.shape[2]), dtype=np.int64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    h, w = region.shape[:2]
    k = _BLUR_KERNEL
    sums = (integral[k:k + h, k:k + w] - integral[k:k + h, 0:w]
            - integral[0:h, k:k + w] + integral[0:h, 0:w])
    return sums // (k * k)


def blur_faces(image: bytes, boxes: Sequence[Sequence[int]]) -> bytes:
    """Blur each box region with 3 passes of an 11x11 box mean.

    The blur reads only pixels inside the box (the kernel clamps to the box
    border), so bytes outside the union of boxes are bit-identical to the
    input.  Integer arithmetic keeps the output deterministic.
    """
    pixels = decode_ppm(image)
    height, width = pixels.shape[:2]
    for box in boxes:
        clipped = clip_box(box, width, height)
        if clipped is None:
            continue
        x, y, w, h = clipped
        region = pixels[y:y + h, x:x + w].astype(np.int64)
        for _ in range(_BLUR_PASSES):
            region = _box_mean_pass(region)
        pixels[y:y + h, x:x + w] = region.astype(np.uint8)
    return encode_ppm(pixels)


# ---------------------------------------------------------------------------
# Analyzer providers
# ---------------------------------------------------------------------------

ANALYZER_NAMES = ("face", "transcript", "sentiment", "image_annotation", "expression")


class ReferenceProvider:
    """Deterministic built-in provider.

    Media ground truth arrives inline with the ingested payload (the
    simulator's sidecar truth); sentiment uses the bundled lexicon;
    facial expression replays an optional scripted event list.
    """

    kind = "reference"

    def __init__(self, expression_script: Sequence[dict] = ()):
        self.expression_script = [dict(e) for e in expression_script]

    def image_truth(self, media_path: str, inline: dict | None) -> dict:
        return inline or {}

    def audio_truth(self, media_path: str, inline: dict | None) -> dict:
        return inline or {}

    def sentiment_scores(self, text: str) -> tuple[str, tuple[float, float, float, float]]:
        return _lexicon_sentiment(text)

    def expression_event(self, window_start_ms: float, step_ms: float) -> dict | None:
        for event in self.expression_script:
            if window_start_ms <= event["t_ms"] < window_start_ms + step_ms:
                return event
        return None


class SidecarFileProvider(ReferenceProvider):
    """Reference provider reading ground truth from a sidecar JSON file.

    The file maps a media path (as stored in its MediaRef) to the same
    entry shape the simulator emits inline.
    """

    kind = "sidecar"

    def __init__(self, sidecar_path: str | Path, expression_script: Sequence[dict] = ()):
        super().__init__(expression_script)
        self.sidecar_path = Path(sidecar_path)
        try:
            self._entries = json.loads(self.sidecar_path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ProviderError(f"sidecar: cannot read {self.sidecar_path}: {exc}") from exc

    def _lookup(self, media_path: str) -> dict:
        try:
            return self._entries[media_path]
        except KeyError:
            raise ProviderError(f"sidecar: no entry for {media_path!r}") from None

    def image_truth(self, media_path: str, inline: dict | None) -> dict:
        return self._lookup(media_path)

    def audio_truth(self, media_path: str, inline: dict | None) -> dict:
        return self._lookup(media_path)


class RemoteProvider:
    """Delegates analysis to an HTTP service, one request per item.

    See docs/providers.md for the request/response contract.
    """

    kind = "remote"

    def __init__(self, endpoint: str, client=None, timeout: float = 10.0):
        import httpx

        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout)

    def _call(self, payload: dict) -> dict:
        import httpx

        try:
            response = self._client.post(self.endpoint, json=payload)
        except httpx.HTTPError as exc:
            raise TransportError(f"provider endpoint {self.endpoint}: {exc}") from exc
        if response.status_code != 200:
            raise ProviderError(f"provider endpoint returned {response.status_code}")
        return response.json()

    def image_truth(self, media_path: str, inline: dict | None, image: bytes | None = None) -> dict:
        payload = {"analyzer": "image", "media_path": media_path}
        if image is not None:
            payload["image_b64"] = base64.b64encode(image).decode("ascii")
        return self._call(payload)

    def audio_truth(self, media_path: str, inline: dict | None, audio: bytes | None = None) -> dict:
        payload = {"analyzer": "audio", "media_path": media_path}
        if audio is not None:
            payload["audio_b64"] = base64.b64encode(audio).decode("ascii")
        return self._call(payload)

    def sentiment_scores(self, text: str) -> tuple[str, tuple[float, float, float, float]]:
        result = self._call({"analyzer": "sentiment", "text": text})
        return result["label"], tuple(result["scores"])

    def expression_event(self, window_start_ms: float, step_ms: float) -> dict | None:
        return self._call({"analyzer": "expression", "t_ms": window_start_ms}) or None


def make_provider(spec: dict | None):
    spec = spec or {"kind": "reference"}
    kind = spec.get("kind", "reference")
    if kind == "reference":
        return ReferenceProvider(expression_script=spec.get("script", ()))
    if kind == "sidecar":
        if not spec.get("sidecar_path"):
            raise ConfigurationError("sidecar provider requires sidecar_path")
        return SidecarFileProvider(spec["sidecar_path"], expression_script=spec.get("script", ()))
    if kind == "remote":
        if not spec.get("endpoint"):
            raise ConfigurationError("remote provider requires endpoint")
        return RemoteProvider(spec["endpoint"])
    raise ConfigurationError(f"unknown provider kind {kind!r}")


# ---------------------------------------------------------------------------
# Analyzer operations
# ---------------------------------------------------------------------------


def detect_faces(image: bytes, provider, *, sidecar: dict | None = None,
                 media_path: str = "") -> list[tuple[int, int, int, int]]:
    """Face boxes for an image, clipped to image bounds."""
    pixels = decode_ppm(image)  # raises on undecodable input
    height, width = pixels.shape[:2]
    if isinstance(provider, RemoteProvider):
        truth = provider.image_truth(media_path, sidecar, image=image)
    else:
        truth = provider.image_truth(media_path, sidecar)
    boxes = []
    for raw in truth.get("face_boxes", ()):
        clipped = clip_box(raw, width, height)
        if clipped is not None:
            boxes.append(clipped)
    return boxes


def annotate_image(image: bytes, provider, t_ms: float, *, sidecar: dict | None = None,
                   media_path: str = "") -> ImageAnnotation:
    pixels = decode_ppm(image)
    height, width = pixels.shape[:2]
    if isinstance(provider, RemoteProvider):
        truth = provider.image_truth(media_path, sidecar, image=image)
    else:
        truth = provider.image_truth(media_path, sidecar)
    boxes = []
    for raw in truth.get("face_boxes", ()):
        clipped = clip_box(raw, width, height)
        if clipped is not None:
            boxes.append(clipped)
    return ImageAnnotation(
        t_ms=t_ms,
        labels=tuple((str(name), 1.0) for name in truth.get("labels", ())),
        texts=tuple(str(t) for t in truth.get("texts", ())),
        face_boxes=tuple(boxes),
    )


def transcribe(chunk_t0_ms: float, provider, *, sidecar: dict | None = None,
               media_path: str = "", audio: bytes | None = None) -> list[TranscriptRecord]:
    """Transcript records for one audio chunk, offset to session time."""
    if isinstance(provider, RemoteProvider):
        truth = provider.audio_truth(media_path, sidecar, audio=audio)
    else:
        truth = provider.audio_truth(media_path, sidecar)
    records = []
    for line in truth.get("lines", ()):
        records.append(TranscriptRecord(
            t_start_ms=chunk_t0_ms + line["t_start_ms"],
            t_end_ms=chunk_t0_ms + line["t_end_ms"],
            speaker=line["speaker"],
            text=line["text"],
        ))
    return records


def facial_expression(frames: Sequence[EegFrame], provider) -> FacialExpressionRecord:
    """Expression record for one analysis window (scripted or all-neutral)."""
    t_ms = frames[0].t_ms if frames else 0
    event = provider.expression_event(t_ms, BAND_STEP_MS)
    if not event:
        return FacialExpressionRecord(t_ms=t_ms)
    return FacialExpressionRecord(
        t_ms=t_ms,
        eye_action=event.get("eye_action", "neutral"),
        upper_face=event.get("upper_face", "neutral"),
        lower_face=event.get("lower_face", "neutral"),
        power=float(event.get("power", 0.0)),
    )


# ---------------------------------------------------------------------------
# Sentiment (lexicon reference)
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"[a-z]+")
_lexicon_cache: dict[str, int] | None = None


def load_lexicon(path: str | Path | None = None) -> dict[str, int]:
    """Word-valence lexicon: one ``word<TAB>+1|-1`` per line."""
    if path is None:
        text = resources.files("fprig").joinpath("data/lexicon.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    lex = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, _, valence = line.partition("\t")
        lex[word.strip().lower()] = 1 if valence.strip() in ("+1", "1") else -1
    return lex


def _lexicon_sentiment(text: str) -> tuple[str, tuple[float, float, float, float]]:
    global _lexicon_cache
    if _lexicon_cache is None:
        _lexicon_cache = load_lexicon()
    p = n = 0
    for token in _TOKEN.findall(text.lower()):
        valence = _lexicon_cache.get(token)
        if valence == 1:
            p += 1
        elif valence == -1:
            n += 1
    total = p + n
    if total == 0:
        return "neutral", (0.0, 0.0, 0.0, 1.0)
    if p >= 1 and n >= 1:
        # Mixed dominates; positive/negative keep their relative weight.
        return "mixed", (0.5 * p / total, 0.5 * n / total, 0.5, 0.0)
    if p > n:
        return "positive", (1.0, 0.0, 0.0, 0.0)
    return "negative", (0.0, 1.0, 0.0, 0.0)


def sentiment(text: str, t_ms: float = 0, provider=None) -> SentimentRecord:
    """Sentiment of a wearer utterance (reference: lexicon token counts)."""
    if provider is not None and not isinstance(provider, (ReferenceProvider,)):
        label, scores = provider.sentiment_scores(text)
    else:
        label, scores = _lexicon_sentiment(text)
    return SentimentRecord(t_ms=t_ms, label=label, scores=scores)
