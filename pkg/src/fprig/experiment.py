"""Stimulus-arousal experiment harness and corpus-size estimator.

The harness drives a synthetic session whose scenario is the concatenation
of per-stimulus EEG/GSR fragments, then averages the arousal proxy over each
stimulus window.  The estimator converts a target corpus size into recording
days; its rate constants are back-derived from the published recording-time
table (corpus divided by days on the 40 GB row) rather than the rounded
prose figures, which do not reproduce that table.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import tempfile
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import arousal_proxy
from .client import LocalIngestClient
from .errors import InsufficientDataError, ValidationError
from .model import SessionConfig
from .service import SessionManager
from .sim import EegTone, GsrEvent, Scenario, run_scenario

# Back-derived daily rates (16 recording hours per day): 40 GB / 1.1 days
# and 40 GB / 52 days.
FULL_GB_PER_DAY = 40.0 / 1.1
TEXT_GB_PER_DAY = 40.0 / 52.0

DEFAULT_STIMULUS_MS = 20000


@dataclass(frozen=True)
class RateConstants:
    full_gb_per_day: float = FULL_GB_PER_DAY
    text_gb_per_day: float = TEXT_GB_PER_DAY

    def validate(self) -> None:
        if not (self.full_gb_per_day > self.text_gb_per_day > 0):
            raise ValidationError("rates: require full_gb_per_day > text_gb_per_day > 0")


def round_sig(x: float, sig_figs: int = 2) -> float:
    if x == 0:
        return 0.0
    return round(x, sig_figs - 1 - math.floor(math.log10(abs(x))))


def estimate_recording_days(corpus_gb: float, mode: str,
                            rates: RateConstants = RateConstants(),
                            sig_figs: int | None = 2) -> float:
    """Days of recording needed for ``corpus_gb`` of data.

    ``mode`` is ``full`` (all streams) or ``text`` (derived text only).
    Reported to 2 significant figures by default; pass ``sig_figs=None``
    for the unrounded value.
    """
    rates.validate()
    if not isinstance(corpus_gb, (int, float)) or not math.isfinite(corpus_gb) or corpus_gb <= 0:
        raise ValidationError("corpus_gb: must be a positive number")
    if mode == "full":
        rate = rates.full_gb_per_day
    elif mode == "text":
        rate = rates.text_gb_per_day
    else:
        raise ValidationError("mode: must be 'full' or 'text'")
    days = corpus_gb / rate
    return days if sig_figs is None else round_sig(days, sig_figs)


# ---------------------------------------------------------------------------
# Stimulus sessions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StimulusFragment:
    """EEG/GSR drive for one stimulus window; times are window-relative."""

    stimulus_id: str
    duration_ms: int = DEFAULT_STIMULUS_MS
    eeg_tones: tuple[EegTone, ...] = ()
    gsr_events: tuple[GsrEvent, ...] = ()


@dataclass
class StimulusScript:
    stimuli: tuple[StimulusFragment, ...]
    references: dict[str, float] = field(default_factory=dict)
    noise_amplitude: float = 0.0
    gsr_baseline: float = 2.0

    def validate(self) -> None:
        if not self.stimuli:
            raise ValidationError("stimuli: script must contain at least one stimulus")
        ids = [s.stimulus_id for s in self.stimuli]
        if len(set(ids)) != len(ids):
            raise ValidationError("stimuli: stimulus ids must be unique")
        for s in self.stimuli:
            if s.duration_ms <= 0:
                raise ValidationError(f"stimuli.{s.stimulus_id}.duration_ms: must be > 0")
        for sid, ref in self.references.items():
            if not (-2.5 <= ref <= 2.5):
                raise ValidationError(f"references.{sid}: must be in [-2.5, 2.5]")

    @classmethod
    def from_obj(cls, obj: dict) -> "StimulusScript":
        stimuli = tuple(
            StimulusFragment(
                stimulus_id=s["stimulus_id"],
                duration_ms=s.get("duration_ms", DEFAULT_STIMULUS_MS),
                eeg_tones=tuple(
                    EegTone(freq_hz=t["freq_hz"], amplitude=t["amplitude"],
                            channels=tuple(t["channels"]) if t.get("channels") is not None else None,
                            t_start_ms=t.get("t_start_ms", 0), t_end_ms=t.get("t_end_ms"))
                    for t in s.get("eeg_tones", ())),
                gsr_events=tuple(GsrEvent(e["t_ms"], e["delta"]) for e in s.get("gsr_events", ())),
            )
            for s in obj.get("stimuli", ()))
        return cls(
            stimuli=stimuli,
            references={k: float(v) for k, v in obj.get("references", {}).items()},
            noise_amplitude=obj.get("noise_amplitude", 0.0),
            gsr_baseline=obj.get("gsr_baseline", 2.0),
        )


@dataclass(frozen=True)
class StimulusResult:
    stimulus_id: str
    mean_arousal: float
    sample_count: int
    ref_arousal: float | None = None
    delta: float | None = None

    def to_obj(self) -> dict:
        return {
            "stimulus_id": self.stimulus_id,
            "mean_arousal": self.mean_arousal,
            "sample_count": self.sample_count,
            "ref_arousal": self.ref_arousal,
            "delta": self.delta,
        }


def script_to_scenario(script: StimulusScript, seed: int = 0) -> tuple[Scenario, list[tuple[str, int, int]]]:
    """Concatenate stimulus fragments into one scenario; returns the windows."""
    script.validate()
    tones = []
    events = []
    windows = []
    onset = 0
    for frag in script.stimuli:
        end = onset + frag.duration_ms
        windows.append((frag.stimulus_id, onset, end))
        for tone in frag.eeg_tones:
            tone_end = frag.duration_ms if tone.t_end_ms is None else tone.t_end_ms
            tones.append(EegTone(
                freq_hz=tone.freq_hz, amplitude=tone.amplitude, channels=tone.channels,
                t_start_ms=onset + tone.t_start_ms, t_end_ms=onset + tone_end))
        for ev in frag.gsr_events:
            events.append(GsrEvent(t_ms=onset + ev.t_ms, delta=ev.delta))
        onset = end
    scenario = Scenario(
        duration_ms=onset,
        eeg_tones=tuple(tones),
        noise_amplitude=script.noise_amplitude,
        gsr_baseline=script.gsr_baseline,
        gsr_events=tuple(events),
        rng_seed=seed,
    )
    return scenario, windows


def run_stimulus_session(script: StimulusScript, config: SessionConfig | None = None,
                         seed: int = 0, manager: SessionManager | None = None,
                         data_dir: Path | str | None = None) -> list[StimulusResult]:
    """Record one synthetic session and average arousal per stimulus window."""
    scenario, windows = script_to_scenario(script, seed)
    if manager is None:
        manager = SessionManager(data_dir or tempfile.mkdtemp(prefix="fprig-exp-"))
    if config is None:
        config = SessionConfig(
            session_id=f"exp-{uuid.uuid4().hex[:12]}",
            segment_duration_ms=max(1000, scenario.duration_ms),
            rng_seed=seed,
        )
    run_scenario(scenario, LocalIngestClient(manager), config)
    records = manager.playback(config.session_id, 0, scenario.duration_ms, kinds=("cognition",))

    results = []
    for stimulus_id, t0, t1 in windows:
        values = [arousal_proxy(r) for r in records if t0 <= r.t_ms < t1]
        if not values:
            raise ValidationError(f"stimulus {stimulus_id!r}: no cognition records in its window")
        mean = sum(values) / len(values)
        ref = script.references.get(stimulus_id)
        results.append(StimulusResult(
            stimulus_id=stimulus_id,
            mean_arousal=mean,
            sample_count=len(values),
            ref_arousal=ref,
            delta=None if ref is None else mean - ref,
        ))
    return results


def compare_reference(results: list[StimulusResult],
                      references: dict[str, float] | None = None) -> tuple[list[dict], float]:
    """Per-stimulus deltas plus the Pearson correlation against references.

    Returns NaN for the correlation when the measured values have zero
    variance (correlation undefined).
    """
    rows = []
    measured, expected = [], []
    for res in results:
        ref = res.ref_arousal if references is None else references.get(res.stimulus_id)
        if ref is None:
            continue
        rows.append({
            "stimulus_id": res.stimulus_id,
            "mean_arousal": res.mean_arousal,
            "ref_arousal": ref,
            "delta": res.mean_arousal - ref,
        })
        measured.append(res.mean_arousal)
        expected.append(ref)
    if len(rows) < 2:
        raise InsufficientDataError("need at least 2 stimuli with reference arousal")
    try:
        r = statistics.correlation(measured, expected)
    except statistics.StatisticsError:
        r = float("nan")
    return rows, r


def emit_results(results: list[StimulusResult],
                 out_dir: Path | str | None = None) -> tuple[bytes, dict]:
    """Render results as CSV bytes plus a console-consumable plot series."""
    if not results:
        raise ValidationError("results: must not be empty")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["stimulus_id", "mean_arousal", "ref_arousal", "delta"])
    for res in results:
        writer.writerow([
            res.stimulus_id,
            repr(res.mean_arousal),
            "" if res.ref_arousal is None else repr(res.ref_arousal),
            "" if res.delta is None else repr(res.delta),
        ])
    csv_bytes = buf.getvalue().encode("utf-8")
    plot = {"series": [res.to_obj() for res in results]}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_bytes(csv_bytes)
        (out / "plot.json").write_text(json.dumps(plot, indent=2), "utf-8")
    return csv_bytes, plot


def read_reference_csv(path: Path | str) -> dict[str, float]:
    """Reference table: CSV with columns stimulus_id, ref_arousal."""
    refs = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            refs[row["stimulus_id"]] = float(row["ref_arousal"])
    return refs
