"""Descriptive experience sampling: tone scheduling and report extraction.

A speaker tone prompts the wearer at random intervals; the wearer then
speaks a report delimited by key phrases ("start ziggy" ... "end ziggy" by
default).  Scheduling is a pure function of the session seed and interval
bounds; extraction is a case-insensitive scan over the wearer transcript.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .model import DesReport, SessionConfig, TranscriptRecord

START_PHRASE = "start ziggy"
END_PHRASE = "end ziggy"

_DES_STREAM_TAG = 0xDE5


@dataclass(frozen=True)
class ToneSchedule:
    session_id: str
    times_ms: tuple[int, ...]
    interval_min_s: int
    interval_max_s: int
    seed: int


def tone_stream(seed: int, interval_min_s: int, interval_max_s: int) -> Iterator[int]:
    """Unbounded tone times; consecutive gaps uniform in [min, max] seconds.

    The ingest service draws from this lazily because the session duration
    is unknown until stop; :func:`schedule_tones` is the capped form.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2 ** 64 - 1), _DES_STREAM_TAG]))
    t = 0.0
    while True:
        t += rng.uniform(interval_min_s, interval_max_s) * 1000.0
        yield int(round(t))


def schedule_tones(config: SessionConfig, duration_ms: int) -> ToneSchedule:
    times = []
    for t in tone_stream(config.rng_seed, config.des_interval_min_s, config.des_interval_max_s):
        if t >= duration_ms:
            break
        times.append(t)
    return ToneSchedule(
        session_id=config.session_id,
        times_ms=tuple(times),
        interval_min_s=config.des_interval_min_s,
        interval_max_s=config.des_interval_max_s,
        seed=config.rng_seed,
    )


def extract_reports(
    transcripts: Sequence[TranscriptRecord],
    start_phrase: str = START_PHRASE,
    end_phrase: str = END_PHRASE,
) -> list[DesReport]:
    """Extract DES reports from time-ordered wearer transcripts.

    The wearer texts are joined with single spaces (a phrase may span two
    records when split at a word boundary) and scanned case-insensitively.
    Text between a start phrase and the next end phrase becomes one report,
    delimiters excluded.  A repeated start phrase inside an open report is
    literal text; an end phrase with no open report is ignored; a report
    still open when the transcript ends is closed with ``terminated=False``.
    """
    wearer = [t for t in transcripts if t.speaker == "wearer"]
    if not wearer:
        return []

    pieces: list[str] = []
    spans: list[tuple[int, int, TranscriptRecord]] = []  # [char_start, char_end) per record
    pos = 0
    for rec in wearer:
        text = rec.text.strip()
        if pieces:
            pos += 1  # joining space
        pieces.append(text)
        spans.append((pos, pos + len(text), rec))
        pos += len(text)
    joined = " ".join(pieces)
    lowered = joined.lower()
    start_lc = start_phrase.lower()
    end_lc = end_phrase.lower()

    def record_at(char_index: int) -> TranscriptRecord:
        for lo, hi, rec in spans:
            if lo <= char_index < max(hi, lo + 1):
                return rec
        return spans[-1][2]

    reports: list[DesReport] = []
    cursor = 0
    while True:
        start_at = lowered.find(start_lc, cursor)
        if start_at < 0:
            break
        text_begin = start_at + len(start_lc)
        end_at = lowered.find(end_lc, text_begin)
        if end_at < 0:
            reports.append(DesReport(
                t_start_ms=record_at(start_at).t_start_ms,
                t_end_ms=wearer[-1].t_end_ms,
                text=joined[text_begin:].strip(),
                terminated=False,
            ))
            break
        reports.append(DesReport(
            t_start_ms=record_at(start_at).t_start_ms,
            t_end_ms=record_at(end_at + len(end_lc) - 1).t_end_ms,
            text=joined[text_begin:end_at].strip(),
            terminated=True,
        ))
        cursor = end_at + len(end_lc)
    return reports
