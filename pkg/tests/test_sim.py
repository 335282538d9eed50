from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fprig.errors import ConfigurationError, ConflictError
from fprig.model import SessionConfig
from fprig.sim import (
    AUDIO_RATE_HZ,
    EegTone,
    ExpressionEvent,
    GsrEvent,
    ImageSpec,
    Scenario,
    SpeechLine,
    build_envelopes,
    gen_audio,
    gen_eeg,
    gen_gsr,
    gen_image,
    run_scenario,
)

from helpers import dft_power_spectrum, ppm_pixels, region_variance


def scenario(**kwargs):
    kwargs.setdefault("duration_ms", 4000)
    return Scenario(**kwargs)


class TestEeg:
    def test_silent_scenario_gives_zero_channels(self):
        frames = gen_eeg(scenario(), 0, 1000)
        assert len(frames) == 128
        assert all(f.channels == (0,) * 14 for f in frames)

    def test_frame_grid_is_exact(self):
        frames = gen_eeg(scenario(), 0, 1000)
        assert [f.t_ms for f in frames] == [n * (1000.0 / 128.0) for n in range(128)]

    def test_pure_tone_spectrum(self):
        sc = scenario(eeg_tones=(EegTone(freq_hz=10.0, amplitude=1000.0),))
        frames = gen_eeg(sc, 0, 2000)
        samples = [f.channels[3] for f in frames]
        freqs, power = dft_power_spectrum(samples)
        total = power.sum()
        near = power[(freqs >= 9.0) & (freqs <= 11.0)].sum()
        assert near >= 0.99 * total
        assert abs(power.sum() - 1000.0 ** 2 / 2) / (1000.0 ** 2 / 2) < 0.01

    def test_same_seed_bit_identical(self):
        sc = scenario(noise_amplitude=50.0, rng_seed=42)
        a = gen_eeg(sc, 0, 2000)
        b = gen_eeg(sc, 0, 2000)
        assert a == b

    def test_noise_is_window_split_invariant(self):
        sc = scenario(noise_amplitude=50.0, rng_seed=9)
        whole = gen_eeg(sc, 0, 2000)
        split = gen_eeg(sc, 0, 1000) + gen_eeg(sc, 1000, 2000)
        assert whole == split

    def test_different_seeds_differ(self):
        a = gen_eeg(scenario(noise_amplitude=50.0, rng_seed=1), 0, 1000)
        b = gen_eeg(scenario(noise_amplitude=50.0, rng_seed=2), 0, 1000)
        assert a != b

    def test_nyquist_rejected(self):
        sc = scenario(eeg_tones=(EegTone(freq_hz=64.0, amplitude=10.0),))
        with pytest.raises(ConfigurationError, match="64"):
            gen_eeg(sc, 0, 1000)

    def test_channel_targeting(self):
        sc = scenario(eeg_tones=(EegTone(freq_hz=10.0, amplitude=500.0, channels=(2,)),))
        frames = gen_eeg(sc, 0, 1000)
        assert any(f.channels[2] != 0 for f in frames)
        assert all(f.channels[5] == 0 for f in frames)


class TestGsr:
    def test_no_events_constant_baseline(self):
        sc = scenario(gsr_baseline=2.0)
        samples = gen_gsr(sc, 0, 4000)
        assert [s.t_ms for s in samples] == [0, 1000, 2000, 3000]
        assert all(s.value == 2.0 for s in samples)

    def test_exponential_decay_closed_form(self):
        sc = scenario(duration_ms=20000, gsr_baseline=1.0,
                      gsr_events=(GsrEvent(t_ms=0, delta=2.0),))
        [sample] = gen_gsr(sc, 10000, 10001)
        assert sample.value == pytest.approx(1.0 + 2.0 * math.exp(-1.0), rel=1e-12)

    def test_negative_total_clamped_to_zero(self):
        sc = scenario(gsr_baseline=0.5, gsr_events=(GsrEvent(t_ms=0, delta=-5.0),))
        samples = gen_gsr(sc, 0, 2000)
        assert all(s.value == 0.0 for s in samples)


class TestImage:
    def test_determinism(self):
        sc = scenario(image_script=(ImageSpec(t_ms=1000, scene="kitchen"),))
        a, _ = gen_image(sc, 1000)
        b, _ = gen_image(sc, 1000)
        assert a == b

    def test_face_box_is_high_variance(self):
        box = (100, 80, 60, 60)
        sc = scenario(image_script=(ImageSpec(t_ms=0, scene="hall", face_boxes=(box,)),))
        data, sidecar = gen_image(sc, 0)
        pixels = ppm_pixels(data)
        x, y, w, h = box
        inside = region_variance(pixels[y:y + h, x:x + w])
        flat = region_variance(pixels[180:220, 200:240])  # away from bars and box
        assert inside >= 10 * max(flat, 1e-9)
        assert sidecar["face_boxes"] == [list(box)]

    def test_empty_script_entry(self):
        data, sidecar = gen_image(scenario(), 2000)
        assert data.startswith(b"P6\n320 240\n255\n")
        assert len(data) == len(b"P6\n320 240\n255\n") + 320 * 240 * 3
        assert sidecar == {"labels": [], "texts": [], "face_boxes": []}

    def test_box_outside_bounds_rejected(self):
        sc = scenario(image_script=(ImageSpec(t_ms=0, face_boxes=((300, 0, 40, 40),)),))
        with pytest.raises(ConfigurationError, match="bounds"):
            sc.validate()
        with pytest.raises(ConfigurationError):
            gen_image(sc, 0)


class TestAudio:
    def test_silent_chunk(self):
        data, sidecar = gen_audio(scenario(), 0, 1000)
        assert sidecar == {"lines": []}
        assert len(data) == 44 + 2 * AUDIO_RATE_HZ * 1

    def test_chunk_length_arithmetic(self):
        data, _ = gen_audio(scenario(duration_ms=60000), 0, 5000)
        assert len(data) == 44 + 2 * AUDIO_RATE_HZ * 5

    def test_sidecar_passthrough(self):
        line = SpeechLine(500, "wearer", "start ziggy I feel calm end ziggy")
        sc = scenario(speech_script=(line,))
        _, sidecar = gen_audio(sc, 0, 4000)
        assert sidecar["lines"] == [{
            "t_start_ms": 500, "t_end_ms": line.t_end_ms, "speaker": "wearer",
            "text": "start ziggy I feel calm end ziggy"}]

    def test_two_speakers_one_chunk(self):
        sc = scenario(speech_script=(
            SpeechLine(0, "wearer", "hello"),
            SpeechLine(100, "other", "hi there"),
        ))
        _, sidecar = gen_audio(sc, 0, 4000)
        assert [l["speaker"] for l in sidecar["lines"]] == ["wearer", "other"]

    def test_overlapping_same_speaker_rejected(self):
        sc = scenario(speech_script=(
            SpeechLine(0, "wearer", "a long utterance here"),
            SpeechLine(100, "wearer", "overlapping"),
        ))
        with pytest.raises(ConfigurationError, match="overlap"):
            sc.validate()

    def test_determinism(self):
        sc = scenario(speech_script=(SpeechLine(0, "wearer", "hello"),))
        assert gen_audio(sc, 0, 2000) == gen_audio(sc, 0, 2000)


@given(duration=st.integers(1, 15000), image_period=st.integers(100, 3000),
       gsr_period=st.integers(200, 3000))
@settings(max_examples=30)
def test_count_law(duration, image_period, gsr_period):
    sc = Scenario(duration_ms=duration)
    eeg = gen_eeg(sc, 0, duration)
    gsr = gen_gsr(sc, 0, duration, gsr_period)
    images = len(range(0, duration, image_period))
    assert abs(len(eeg) - duration * 128 // 1000) <= 1
    assert abs(len(gsr) - duration // gsr_period) <= 1
    assert abs(images - duration // image_period) <= 1


class TestScenarioJson:
    def test_round_trip(self):
        sc = Scenario(
            duration_ms=5000,
            eeg_tones=(EegTone(10.0, 100.0, (0, 1), 0, 5000),),
            noise_amplitude=1.5,
            gsr_events=(GsrEvent(100, 2.0),),
            speech_script=(SpeechLine(0, "wearer", "hi"),),
            image_script=(ImageSpec(1000, "desk", ((1, 2, 3, 4),), ("EXIT",), ("Person",)),),
            expression_script=(ExpressionEvent(2000, lower_face="smile", power=0.5),),
            rng_seed=3,
        )
        assert Scenario.from_obj(json.loads(json.dumps(sc.to_obj()))) == sc

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            Scenario.from_obj({"duration_ms": 1000, "bogus": 2})


class TestRunScenario:
    def test_default_60s_counts(self, manager, local_client):
        sc = Scenario(duration_ms=60000, rng_seed=5)
        summary = run_scenario(sc, local_client,
                               SessionConfig(session_id="counts", rng_seed=5))
        assert summary.sent["image"] == 60
        assert summary.sent["gsr"] == 60
        assert summary.sent["eeg"] == 7680
        assert summary.acked_ok == sum(summary.sent.values())
        assert summary.acked_duplicate == 0

    def test_zero_duration_scenario(self, manager, local_client):
        summary = run_scenario(Scenario(duration_ms=0), local_client,
                               SessionConfig(session_id="empty"))
        assert summary.sent == {}
        assert summary.manifest["segment_count"] == 1
        assert summary.manifest["status"] == "sealed"
        assert summary.manifest["record_counts"] == {}

    def test_duplicate_session_id_surfaces_conflict(self, manager, local_client):
        run_scenario(Scenario(duration_ms=0), local_client, SessionConfig(session_id="dup"))
        with pytest.raises(ConflictError):
            run_scenario(Scenario(duration_ms=0), local_client, SessionConfig(session_id="dup"))

    def test_envelope_build_is_deterministic(self):
        sc = Scenario(duration_ms=3000, noise_amplitude=10.0, rng_seed=11)
        cfg = SessionConfig(session_id="det", rng_seed=11)
        a = build_envelopes(sc, cfg)
        b = build_envelopes(sc, cfg)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
