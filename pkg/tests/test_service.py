from __future__ import annotations

import base64
import json

import pytest

from fprig.chain import HttpAttestClient, verify_chain
from fprig.errors import (
    ConflictError,
    NotFoundError,
    OrderingError,
    ValidationError,
)
from fprig.model import PENDING_ATTESTATION, SessionConfig, parse_segment
from fprig.service import SessionManager
from fprig.sim import Scenario, SpeechLine, build_envelopes

from helpers import record_session


def gsr_env(t, seq, value=2.0):
    return {"stream": "gsr", "seq": seq, "t_ms": t, "payload": {"value": value}}


def cfg(sid, seg_ms=2000, **kw):
    return SessionConfig(session_id=sid, segment_duration_ms=seg_ms, **kw)


class TestStartSession:
    def test_fresh_session(self, manager):
        manifest = manager.start_session(cfg("a1"))
        assert manifest.segment_count == 0
        assert manifest.status == "recording"
        assert manifest.genesis_attestation == "0" * 64
        assert (manager.data_dir / "a1" / "manifest.json").is_file()

    def test_duplicate_id_conflicts(self, manager):
        manager.start_session(cfg("a1"))
        with pytest.raises(ConflictError):
            manager.start_session(cfg("a1"))

    def test_duplicate_on_disk_conflicts(self, manager):
        manager.start_session(cfg("a1"))
        fresh = SessionManager(manager.data_dir, attest_store=manager.attest_store)
        with pytest.raises(ConflictError):
            fresh.start_session(cfg("a1"))

    def test_invalid_config(self, manager):
        with pytest.raises(ValidationError, match="des_interval"):
            manager.start_session(cfg("a1", des_interval_min_s=100, des_interval_max_s=10))

    def test_config_dict_accepted(self, manager):
        manifest = manager.start_session({"session_id": "fromdict"})
        assert manifest.config.image_period_ms == 1000


class TestIngest:
    def test_ordered_samples_acked(self, manager):
        manager.start_session(cfg("s"))
        acks = manager.ingest("s", [gsr_env(0, 1), gsr_env(1000, 2)])
        assert [a["status"] for a in acks] == ["ok", "ok"]

    def test_duplicate_envelope_stored_once(self, manager):
        manager.start_session(cfg("s"))
        manager.ingest("s", [gsr_env(0, 1)])
        [ack] = manager.ingest("s", [gsr_env(0, 1)])
        assert ack["status"] == "duplicate"
        manager.stop_session("s")
        records = manager.playback("s", 0, 10**9, kinds=("gsr",))
        assert len(records) == 1

    def test_time_regression_rejected(self, manager):
        manager.start_session(cfg("s"))
        manager.ingest("s", [gsr_env(2000, 1)])
        with pytest.raises(OrderingError):
            manager.ingest("s", [gsr_env(1500, 2)])

    def test_unknown_session(self, manager):
        with pytest.raises(NotFoundError):
            manager.ingest("nope", [gsr_env(0, 1)])

    def test_sealed_session_rejects_ingest(self, manager):
        manager.start_session(cfg("s"))
        manager.stop_session("s")
        with pytest.raises(ConflictError):
            manager.ingest("s", [gsr_env(0, 1)])

    def test_bad_payload(self, manager):
        manager.start_session(cfg("s"))
        with pytest.raises(ValidationError):
            manager.ingest("s", [{"stream": "gsr", "seq": 1, "t_ms": 0, "payload": {}}])
        with pytest.raises(ValidationError):
            manager.ingest("s", [{"stream": "laser", "seq": 1, "t_ms": 0, "payload": {}}])

    def test_eeg_channel_count_enforced(self, manager):
        manager.start_session(cfg("s"))
        with pytest.raises(ValidationError, match="14"):
            manager.ingest("s", [{
                "stream": "eeg", "seq": 1, "t_ms": 0,
                "payload": {"channels": [0] * 13}}])


class TestRotation:
    def test_rotation_on_data_time(self, manager):
        manager.start_session(cfg("s", seg_ms=2000))
        manager.ingest("s", [gsr_env(t * 1000, t + 1) for t in range(5)])
        # t=4000 crossed boundaries at 2000 and 4000 -> 2 sealed segments
        manifest = manager.get_manifest("s")
        assert manifest.segment_count == 2
        seg0 = parse_segment((manager.data_dir / "s" / "segment_00000.json").read_bytes())
        assert seg0.start_ms == 0 and seg0.end_ms == 2000
        assert [r.t_ms for r in seg0.records] == [0, 1000]

    def test_gap_produces_empty_attested_segments(self, manager):
        manager.start_session(cfg("s", seg_ms=2000))
        manager.ingest("s", [gsr_env(0, 1), gsr_env(6500, 2)])
        manager.stop_session("s")
        manifest = manager.get_manifest("s")
        assert manifest.segment_count == 4
        seg1 = parse_segment((manager.data_dir / "s" / "segment_00001.json").read_bytes())
        assert seg1.records == ()
        assert verify_chain(manager.data_dir / "s", manager.attest_store).verdict == "intact"

    def test_chain_linkage_across_segments(self, manager):
        directory, _ = record_session(manager, "link", duration_ms=6000)
        store = manager.attest_store
        for i in range(1, 3):
            seg = parse_segment((directory / f"segment_{i:05d}.json").read_bytes())
            assert seg.prev_attestation == store.get("link", i - 1).response_digest

    def test_attestation_down_leaves_pending_and_gap_flag(self, tmp_path):
        dead = HttpAttestClient("http://127.0.0.1:9", timeout=0.2)
        manager = SessionManager(tmp_path / "data", attest_client=dead)
        manager.start_session(cfg("s", seg_ms=2000))
        manager.ingest("s", [gsr_env(0, 1), gsr_env(2500, 2)])
        manager.stop_session("s")
        manifest = manager.get_manifest("s")
        assert manifest.attestation_gaps == (0, 1)
        assert manifest.last_attestation == PENDING_ATTESTATION
        seg1 = parse_segment((manager.data_dir / "s" / "segment_00001.json").read_bytes())
        assert seg1.prev_attestation == PENDING_ATTESTATION


class TestStop:
    def test_stop_after_timed_rotation_counts_two(self, manager):
        manager.start_session(cfg("s", seg_ms=2000))
        manager.ingest("s", [gsr_env(0, 1), gsr_env(2100, 2)])
        manifest = manager.stop_session("s")
        assert manifest.segment_count == 2
        assert manifest.status == "sealed"

    def test_immediate_stop_single_segment(self, manager):
        manager.start_session(cfg("s"))
        manifest = manager.stop_session("s")
        assert manifest.segment_count == 1

    def test_double_stop_idempotent(self, manager):
        manager.start_session(cfg("s"))
        first = manager.stop_session("s")
        second = manager.stop_session("s")
        assert first == second

    def test_des_reports_extracted_at_stop(self, manager):
        manager.start_session(cfg("s", seg_ms=5000))
        audio = base64.b64encode(b"RIFF0000WAVE").decode()
        manager.ingest("s", [{
            "stream": "audio", "seq": 1, "t_ms": 0,
            "payload": {"data_b64": audio, "duration_ms": 1000, "sidecar": {"lines": [
                {"t_start_ms": 0, "t_end_ms": 900, "speaker": "wearer",
                 "text": "start ziggy lunch thoughts end ziggy"}]}},
        }])
        manager.stop_session("s")
        [report] = manager.playback("s", 0, 10**9, kinds=("des",))
        assert report.text == "lunch thoughts"


class TestPlayback:
    def test_open_buffer_visible_while_recording(self, manager):
        manager.start_session(cfg("s"))
        manager.ingest("s", [gsr_env(0, 1)])
        records = manager.playback("s", 0, 1000, kinds=("gsr",))
        assert len(records) == 1

    def test_arousal_series(self, manager):
        record_session(manager, "ar", duration_ms=4000)
        series = manager.arousal_series("ar", 0, 10**9)
        assert len(series) >= 1
        assert all(-2.5 <= p["arousal"] <= 2.5 for p in series)


class TestLiveFeed:
    def test_subscribe_then_ingest(self, manager):
        manager.start_session(cfg("s"))
        sub = manager.subscribe("s")
        manager.ingest("s", [gsr_env(0, 1), gsr_env(1000, 2), gsr_env(1500, 3)])
        events = [sub.get(timeout=1) for _ in range(3)]
        assert [e["kind"] for e in events] == ["gsr"] * 3
        seqs = [e["feed_seq"] for e in events]
        assert seqs == sorted(seqs)

    def test_subscribe_after_seal_terminal(self, manager):
        manager.start_session(cfg("s"))
        manager.stop_session("s")
        sub = manager.subscribe("s")
        event = sub.get(timeout=1)
        assert event["type"] == "session_sealed"

    def test_fanout_to_two_subscribers(self, manager):
        manager.start_session(cfg("s"))
        a, b = manager.subscribe("s"), manager.subscribe("s")
        manager.ingest("s", [gsr_env(0, 1)])
        assert a.get(timeout=1)["kind"] == "gsr"
        assert b.get(timeout=1)["kind"] == "gsr"

    def test_seal_event_closes_feed(self, manager):
        manager.start_session(cfg("s"))
        sub = manager.subscribe("s")
        manager.stop_session("s")
        assert sub.get(timeout=1)["type"] == "session_sealed"

    def test_tone_events_delivered(self, manager):
        manager.start_session(cfg("s", des_interval_min_s=1, des_interval_max_s=1))
        sub = manager.subscribe("s")
        manager.ingest("s", [gsr_env(0, 1), gsr_env(2500, 2)])
        events = []
        while True:
            e = sub.get(timeout=0.2)
            if e is None:
                break
            events.append(e)
        tones = [e for e in events if e["type"] == "des_tone"]
        assert [t["t_ms"] for t in tones] == [1000, 2000]

    def test_cognition_events_carry_arousal(self, manager):
        manager.start_session(cfg("s"))
        sub = manager.subscribe("s")
        envs = build_envelopes(Scenario(duration_ms=3000), cfg("s", seg_ms=60000))
        manager.ingest("s", [e for e in envs if e["stream"] == "eeg"])
        arousals = []
        while True:
            e = sub.get(timeout=0.2)
            if e is None:
                break
            if e["kind"] == "cognition":
                arousals.append(e["arousal"])
        assert arousals and all(-2.5 <= a <= 2.5 for a in arousals)


class TestDurability:
    def test_resume_after_restart(self, manager):
        manager.start_session(cfg("s", seg_ms=2000))
        manager.ingest("s", [gsr_env(0, 1), gsr_env(1000, 2), gsr_env(2500, 3)])
        assert manager.get_manifest("s").segment_count == 1

        fresh = SessionManager(manager.data_dir, attest_store=manager.attest_store)
        fresh.ingest("s", [gsr_env(4200, 4)])
        manifest = fresh.stop_session("s")
        assert manifest.segment_count == 3
        assert verify_chain(manager.data_dir / "s", manager.attest_store).verdict == "intact"

    def test_resume_rejects_duplicate_seq_from_before_restart(self, manager):
        manager.start_session(cfg("s", seg_ms=2000))
        manager.ingest("s", [gsr_env(0, 1), gsr_env(2500, 2)])
        fresh = SessionManager(manager.data_dir, attest_store=manager.attest_store)
        [ack] = fresh.ingest("s", [gsr_env(0, 1)])
        assert ack["status"] == "duplicate"

    def test_reconcile_segment_sealed_before_manifest_update(self, manager):
        manager.start_session(cfg("s", seg_ms=2000))
        manager.ingest("s", [gsr_env(0, 1), gsr_env(2500, 2)])
        directory = manager.data_dir / "s"
        manifest_obj = json.loads((directory / "manifest.json").read_text())
        manifest_obj["segment_count"] = 0
        manifest_obj["last_attestation"] = None
        (directory / "manifest.json").write_text(json.dumps(manifest_obj))
        (directory / "stream_state.json").unlink()

        fresh = SessionManager(manager.data_dir, attest_store=manager.attest_store)
        assert fresh.get_manifest("s").segment_count == 1

    def test_replay_prefixes_are_byte_identical(self, tmp_path):
        from fprig.chain import AttestationStore

        store = AttestationStore(tmp_path / "attestations.jsonl")
        scenario = Scenario(
            duration_ms=8000, noise_amplitude=4.0, rng_seed=3,
            speech_script=(SpeechLine(100, "wearer", "start ziggy okay end ziggy"),))
        config = cfg("replay", seg_ms=2000, rng_seed=3)
        envelopes = build_envelopes(scenario, config)

        def run(data_dir, upto):
            manager = SessionManager(data_dir, attest_store=store)
            manager.start_session(config)
            for i in range(0, upto, 100):
                manager.ingest("replay", envelopes[i:i + 100])
            if upto == len(envelopes):
                manager.stop_session("replay")
            return {
                p.name: p.read_bytes()
                for p in sorted((data_dir / "replay").glob("segment_*.json"))
            }

        full = run(tmp_path / "full", len(envelopes))
        for fraction in (0.3, 0.7, 1.0):
            upto = int(len(envelopes) * fraction)
            partial = run(tmp_path / f"p{int(fraction * 100)}", upto)
            for name, data in partial.items():
                assert data == full[name], f"{name} diverged at prefix {fraction}"


class TestHttpApi:
    @pytest.fixture
    def client(self, tmp_path):
        from fastapi.testclient import TestClient

        from fprig.api import create_app

        app = create_app(tmp_path / "data")
        with TestClient(app) as client:
            client.app = app
            yield client

    def test_healthz(self, client):
        assert client.get("/healthz").json() == {"status": "ok"}

    def test_session_lifecycle(self, client):
        created = client.post("/sessions", json={"session_id": "h1",
                                                 "segment_duration_ms": 2000})
        assert created.status_code == 201
        assert created.json()["status"] == "recording"

        acks = client.post("/sessions/h1/ingest", json={"envelopes": [
            gsr_env(0, 1), gsr_env(1000, 2)]}).json()["acks"]
        assert [a["status"] for a in acks] == ["ok", "ok"]

        stopped = client.post("/sessions/h1/stop").json()
        assert stopped["status"] == "sealed"
        assert stopped["record_counts"]["gsr"] == 2

        records = client.get("/sessions/h1/records",
                             params={"t0": 0, "t1": 99999, "kinds": "gsr"}).json()["records"]
        assert len(records) == 2
        assert records[0]["kind"] == "gsr"

    def test_error_mapping(self, client):
        assert client.get("/sessions/none/manifest").status_code == 404
        client.post("/sessions", json={"session_id": "e1"})
        assert client.post("/sessions", json={"session_id": "e1"}).status_code == 409
        bad = client.post("/sessions", json={"session_id": "e2", "image_period_ms": 5})
        assert bad.status_code == 422
        assert "image_period_ms" in str(bad.json()["error"]["violations"])

    def test_media_roundtrip(self, client, manager):
        from helpers import record_session as rec

        mgr = client.app.state.manager
        rec(mgr, "m1", duration_ms=3000)
        response = client.get("/sessions/m1/media/img_0.ppm")
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("image/x-portable-pixmap")
        assert response.content.startswith(b"P6")
        assert client.get("/sessions/m1/media/nope.ppm").status_code == 404

    def test_attestation_endpoints_withhold_nonce(self, client):
        client.post("/sessions", json={"session_id": "n1"})
        client.post("/sessions/n1/stop")
        atts = client.get("/attestations/n1").json()["attestations"]
        assert len(atts) == 1
        assert "nonce_hex" not in atts[0]
        assert set(atts[0]) == {"session_id", "segment_index", "file_digest",
                                "response_digest", "received_epoch_ms"}

    def test_attest_endpoint(self, client):
        response = client.post("/attest", json={
            "session_id": "x", "segment_index": 0, "file_digest": "a" * 64})
        digest = response.json()["response_digest"]
        replay = client.post("/attest", json={
            "session_id": "x", "segment_index": 0, "file_digest": "a" * 64})
        assert replay.json()["response_digest"] == digest
        conflict = client.post("/attest", json={
            "session_id": "x", "segment_index": 0, "file_digest": "b" * 64})
        assert conflict.status_code == 409

    def test_verify_endpoint(self, client):
        mgr = client.app.state.manager
        record_session(mgr, "v1", duration_ms=3000)
        report = client.post("/verify", json={"session_id": "v1"}).json()
        assert report["verdict"] == "intact"
        assert client.post("/verify", json={"session_id": "zz"}).status_code == 404

    def test_list_sessions(self, client):
        client.post("/sessions", json={"session_id": "l1"})
        client.post("/sessions", json={"session_id": "l2"})
        sessions = client.get("/sessions").json()["sessions"]
        assert [s["session_id"] for s in sessions] == ["l1", "l2"]

    def test_live_websocket(self, client):
        client.post("/sessions", json={"session_id": "w1"})
        with client.websocket_connect("/sessions/w1/live") as ws:
            client.post("/sessions/w1/ingest", json={"envelopes": [gsr_env(0, 1)]})
            event = ws.receive_json()
            assert event["type"] == "record"
            assert event["kind"] == "gsr"
            client.post("/sessions/w1/stop")
            while True:
                event = ws.receive_json()
                if event["type"] == "session_sealed":
                    break

    def test_console_placeholder(self, client):
        response = client.get("/console/")
        assert response.status_code == 200
        assert "console" in response.text
