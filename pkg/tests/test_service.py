import json
import socket
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from neuroloop.netserve.frames import (FrameDecoder, FrameType,
                                       decode_json_payload, encode_frame,
                                       encode_json_frame, pack_samples_block)
from neuroloop.netserve.service import SessionService, stream_client
from neuroloop.netserve.store import SessionStore
from neuroloop.pipeline import replay_session
from neuroloop.session import (Lesson, RunMode, Policy, Segment,
                               events_to_jsonl, lesson_to_manifest)
from neuroloop.synthgen import CLEAR, SyntheticEEG, Timeline


LESSON = Lesson("net-demo", (
    Segment(300.0, "video:long", ("hint:a", "hint:b"), "slides:alt"),
))


@pytest.fixture
def service(tmp_path, run_config, calibration):
    store = SessionStore(tmp_path)
    store.put_lesson(LESSON.id, lesson_to_manifest(LESSON))
    svc = SessionService(store, run_config, calibration.model,
                         calibration.policy)
    svc.start(("127.0.0.1", 0), ("127.0.0.1", 0))
    yield svc
    svc.stop()


def api(service, method, path, body=None):
    url = f"http://127.0.0.1:{service.http_port}{path}"
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.loads(resp.read())


def api_error(service, method, path, body=None):
    try:
        api(service, method, path, body)
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())
    raise AssertionError("expected an HTTP error")


class TestControlPlane:
    def test_health(self, service):
        assert api(service, "GET", "/health") == {"ok": True}

    def test_lesson_round_trip(self, service):
        manifest = lesson_to_manifest(Lesson("put-me", (Segment(5.0, "x"),)))
        assert api(service, "PUT", "/lessons/put-me", manifest)["ok"]
        assert "put-me" in api(service, "GET", "/lessons")["lessons"]
        assert api(service, "GET", "/lessons/put-me")["segments"]

    def test_invalid_lesson_rejected_with_paths(self, service):
        code, doc = api_error(service, "PUT", "/lessons/bad",
                              {"segments": [{"duration_s": -1}]})
        assert code == 400
        assert "segments[0].duration_s" in doc["error"]

    def test_unknown_session_404(self, service):
        code, _ = api_error(service, "GET", "/sessions/nope")
        assert code == 404
        code, _ = api_error(service, "POST", "/sessions/nope/command",
                            {"command": "pause"})
        assert code == 404

    def test_create_and_describe(self, service):
        doc = api(service, "POST", "/sessions",
                  {"user": "kit", "lesson_id": LESSON.id})
        sid = doc["session_id"]
        info = api(service, "GET", f"/sessions/{sid}")
        assert info["user"] == "kit"
        assert info["mode"] == "PLAYING"
        assert info["policy"]["theta_high"] == pytest.approx(
            service.default_policy.theta_high)
        assert sid in api(service, "GET", "/sessions")["sessions"]

    def test_policy_set_and_reject(self, service):
        sid = api(service, "POST", "/sessions",
                  {"user": "a", "lesson_id": LESSON.id})["session_id"]
        doc = api(service, "POST", f"/sessions/{sid}/policy",
                  {"theta_high": 0.85, "theta_low": 0.6})
        assert doc["policy"]["theta_high"] == 0.85
        info = api(service, "GET", f"/sessions/{sid}")
        assert info["policy"]["theta_high"] == 0.85
        code, err = api_error(service, "POST", f"/sessions/{sid}/policy",
                              {"theta_high": 0.5, "theta_low": 0.9})
        assert code == 400 and "theta" in err["error"]


class TestSyntheticSource:
    def test_session_runs_and_persists(self, service):
        sid = api(service, "POST", "/sessions", {
            "user": "sim", "lesson_id": LESSON.id,
            "source": {"type": "synthetic", "rate": 25.0, "duration_s": 20.0},
        })["session_id"]
        deadline = time.monotonic() + 15
        epochs = 0
        while time.monotonic() < deadline:
            epochs = api(service, "GET", f"/sessions/{sid}")["epoch"]
            if epochs >= 30:
                break
            time.sleep(0.2)
        assert epochs >= 30
        rows = service.store.read_rows(sid)
        epoch_rows = [r for r in rows if r["kind"] == "epoch"]
        assert len(epoch_rows) >= 30
        indices = [r["epoch_index"] for r in epoch_rows]
        assert indices == sorted(indices)

    def test_inject_state_changes_signal(self, service):
        sid = api(service, "POST", "/sessions", {
            "user": "inj", "lesson_id": LESSON.id,
            "source": {"type": "synthetic", "rate": 25.0, "duration_s": 40.0},
        })["session_id"]
        live = service.get_session(sid)
        q = live.subscribe()
        before = [q.get(timeout=10)["band_powers"]["theta"] for _ in range(6)]
        api(service, "POST", f"/sessions/{sid}/command",
            {"command": "inject_state", "label": "CONFUSED"})
        # skip epochs whose windows straddle the injection
        for _ in range(4):
            q.get(timeout=10)
        after = [q.get(timeout=10)["band_powers"]["theta"] for _ in range(6)]
        live.unsubscribe(q)
        assert np.mean(after) > 2.0 * np.mean(before)

    def test_stream_endpoint_emits_ndjson(self, service):
        sid = api(service, "POST", "/sessions", {
            "user": "ndjson", "lesson_id": LESSON.id,
            "source": {"type": "synthetic", "rate": 25.0, "duration_s": 15.0},
        })["session_id"]
        url = f"http://127.0.0.1:{service.http_port}/sessions/{sid}/stream"
        docs = []
        with urllib.request.urlopen(url, timeout=10) as resp:
            for line in resp:
                doc = json.loads(line)
                if doc.get("type") == "state":
                    docs.append(doc)
                if len(docs) >= 5:
                    break
        assert all(d["session_id"] == sid for d in docs)
        assert all("confusion" in d and "band_powers" in d for d in docs)
        idx = [d["epoch_index"] for d in docs]
        assert idx == sorted(idx)

    def test_pause_resume_commands_logged(self, service):
        sid = api(service, "POST", "/sessions", {
            "user": "ops", "lesson_id": LESSON.id,
            "source": {"type": "synthetic", "rate": 25.0, "duration_s": 30.0},
        })["session_id"]
        time.sleep(1.0)
        api(service, "POST", f"/sessions/{sid}/command", {"command": "pause"})
        assert api(service, "GET", f"/sessions/{sid}")["mode"] == "PAUSED_ADVISORY"
        api(service, "POST", f"/sessions/{sid}/command", {"command": "resume"})
        assert api(service, "GET", f"/sessions/{sid}")["mode"] == "PLAYING"
        events = api(service, "GET", f"/sessions/{sid}/events")["events"]
        kinds = [e["action"] for e in events]
        assert "OperatorPause" in kinds and "OperatorResume" in kinds


class TestStreamPlane:
    def test_tcp_round_trip_produces_states(self, service, run_config):
        sid = api(service, "POST", "/sessions",
                  {"user": "tcp", "lesson_id": LESSON.id})["session_id"]
        gen = SyntheticEEG(run_config.generator, Timeline(((0.0, CLEAR),)))
        states = []
        n = stream_client("127.0.0.1", service.tcp_port, sid, gen,
                          run_config.step_samples, rate=0.0, duration_s=10.0,
                          on_state=states.append)
        # 10 s of signal -> first epoch at 1.0 s then every 0.5 s = 19
        assert n == 19
        assert [s["epoch_index"] for s in states] == list(range(19))

    def test_hello_unknown_session_rejected(self, service, run_config):
        gen = SyntheticEEG(run_config.generator, Timeline(((0.0, CLEAR),)))
        from neuroloop.netserve.frames import ProtocolError
        with pytest.raises(ProtocolError):
            stream_client("127.0.0.1", service.tcp_port, "ghost", gen,
                          run_config.step_samples, duration_s=1.0)

    def test_hello_wrong_geometry_rejected(self, service):
        sid = api(service, "POST", "/sessions",
                  {"user": "geom", "lesson_id": LESSON.id})["session_id"]
        with socket.create_connection(("127.0.0.1", service.tcp_port),
                                      timeout=5) as sock:
            sock.sendall(encode_json_frame(FrameType.HELLO, {
                "session_id": sid, "fs": 250.0, "n_channels": 3}))
            dec = FrameDecoder()
            frames = []
            while not frames:
                frames = dec.feed(sock.recv(4096))
            assert frames[0].type == FrameType.ERROR
            assert decode_json_payload(frames[0])["fatal"]

    def test_bad_magic_closes_connection(self, service):
        with socket.create_connection(("127.0.0.1", service.tcp_port),
                                      timeout=5) as sock:
            sock.sendall(b"GARBAGE-NOT-A-FRAME!....")
            dec = FrameDecoder()
            got = b""
            while True:
                chunk = sock.recv(4096)
                if not chunk:
                    break
                got += chunk
            # server sent a fatal ERROR frame and closed
            frames = dec.feed(got)
            assert frames and frames[-1].type == FrameType.ERROR

    def test_replay_of_tcp_session_matches_log(self, service, run_config,
                                               calibration):
        sid = api(service, "POST", "/sessions",
                  {"user": "rep", "lesson_id": LESSON.id})["session_id"]
        gen = SyntheticEEG(run_config.generator, Timeline(((0.0, CLEAR),)))
        stream_client("127.0.0.1", service.tcp_port, sid, gen,
                      run_config.step_samples, rate=0.0, duration_s=20.0)
        time.sleep(0.3)
        rows = service.store.read_rows(sid)
        stored = events_to_jsonl(service.store.read_events(sid))
        meta = service.store.get_meta(sid)
        events = replay_session(rows, LESSON, Policy.from_dict(meta["policy"]),
                                RunMode(), meta["step_s"])
        assert events_to_jsonl(events) == stored


class TestBackpressure:
    def test_overflow_drops_oldest_and_signals_gap(self, tmp_path, run_config,
                                                   calibration):
        from dataclasses import replace
        config = replace(run_config, stream_buffer_frames=4)
        store = SessionStore(tmp_path / "bp")
        store.put_lesson(LESSON.id, lesson_to_manifest(LESSON))
        svc = SessionService(store, config, calibration.model,
                             calibration.policy)
        svc.start(("127.0.0.1", 0), ("127.0.0.1", 0))
        try:
            sid = api(svc, "POST", "/sessions",
                      {"user": "bp", "lesson_id": LESSON.id})["session_id"]
            live = svc.get_session(sid)
            # stall the pipeline so the ingest buffer must overflow
            gen = SyntheticEEG(config.generator, Timeline(((0.0, CLEAR),)))
            with live.lock:
                with socket.create_connection(
                        ("127.0.0.1", svc.tcp_port), timeout=10) as sock:
                    sock.sendall(encode_json_frame(FrameType.HELLO, {
                        "session_id": sid, "fs": config.fs, "n_channels": 8}))
                    for _ in range(30):
                        block = gen.next_block(config.step_samples)
                        sock.sendall(encode_frame(
                            FrameType.SAMPLES, pack_samples_block(block)))
                    time.sleep(0.5)  # let the reader thread enqueue + drop
                    saw_gap = self._drain_for_gap(sock, release=live.lock)
            assert saw_gap
        finally:
            svc.stop()

    @staticmethod
    def _drain_for_gap(sock, release):
        release.release()  # un-stall the pipeline; worker drains and reports
        try:
            dec = FrameDecoder()
            deadline = time.monotonic() + 10
            while time.monotonic() < deadline:
                try:
                    chunk = sock.recv(4096)
                except socket.timeout:
                    continue
                if not chunk:
                    break
                for frame in dec.feed(chunk):
                    if frame.type == FrameType.ERROR \
                            and decode_json_payload(frame).get("gap"):
                        return True
            return False
        finally:
            release.acquire()  # hand the lock back to the with-statement
