#!/usr/bin/env python3
"""Record a fully-featured demo session in-process and verify its chain.

Streams one minute of synthetic EEG/GSR/image/audio (with a spoken DES
report and one scripted face) through the ingestion core, seals the
session, prints the per-kind record counts, and runs the chain verifier.
"""

import argparse
import json
from pathlib import Path

from fprig.chain import verify_chain
from fprig.client import LocalIngestClient
from fprig.model import SessionConfig
from fprig.service import SessionManager
from fprig.sim import EegTone, GsrEvent, ImageSpec, Scenario, SpeechLine, run_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default="./fprig-data")
    parser.add_argument("--session-id", default="demo")
    parser.add_argument("--duration-s", type=int, default=60)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    duration_ms = args.duration_s * 1000
    scenario = Scenario(
        duration_ms=duration_ms,
        eeg_tones=(
            EegTone(freq_hz=10.0, amplitude=600.0),
            EegTone(freq_hz=20.0, amplitude=300.0, t_start_ms=duration_ms // 2),
        ),
        noise_amplitude=8.0,
        gsr_events=(GsrEvent(t_ms=duration_ms // 3, delta=2.5),),
        speech_script=(
            SpeechLine(2000, "wearer", "start ziggy I am watching the demo end ziggy"),
            SpeechLine(12000, "other", "how is it going"),
        ),
        image_script=(
            ImageSpec(t_ms=5000, scene="office", face_boxes=((120, 60, 70, 90),),
                      labels=("Person", "Desk"), texts=("EXIT",)),
        ),
        rng_seed=args.seed,
    )
    config = SessionConfig(session_id=args.session_id, rng_seed=args.seed,
                           segment_duration_ms=10000)

    manager = SessionManager(args.data_dir)
    summary = run_scenario(scenario, LocalIngestClient(manager), config)
    view = manager.manifest_view(args.session_id)

    print(f"session {args.session_id}: {view['segment_count']} segments, "
          f"{sum(view['record_counts'].values())} records")
    print(json.dumps(view["record_counts"], indent=2))
    print(f"sent: {summary.sent}, des tones scheduled: {summary.des_tones_scheduled}")

    report = verify_chain(Path(args.data_dir) / args.session_id, manager.attest_store)
    print(f"chain verdict: {report.verdict}")
    raise SystemExit(0 if report.verdict == "intact" else 1)


if __name__ == "__main__":
    main()
