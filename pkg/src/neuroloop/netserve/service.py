"""Session service: HTTP control plane, TCP stream plane, persistence.

One LiveSession per session id; its pipeline is the single logical writer
(guarded by a lock), while control-plane reads are freely concurrent. Sample
ingestion over TCP goes through a bounded buffer: when the pipeline lags by
more than ``stream_buffer_frames`` SAMPLES frames, the oldest are dropped,
the client gets an ERROR frame flagging the gap, and the epoch grid
re-synchronizes at the next block.
"""

from __future__ import annotations

import json
import queue
import re
import socket
import socketserver
import threading
import time
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlparse

from ..config import RunConfig
from ..detect import LdaModel
from ..pipeline import StreamPipeline, make_epoch_row
from ..session import (COMPLETED, Lesson, LessonValidationError, Policy,
                       RunMode, SELF_PACED, SYNCHRONOUS, SessionState,
                       force_pause, force_resume, load_lesson, session_step)
from ..sigcore import SampleBlock, SignalError
from ..synthgen import (SyntheticEEG, Timeline, _KNOWN_STATES,
                        timeline_from_json)
from .frames import (FrameDecoder, FrameType, ProtocolError,
                     decode_json_payload, encode_frame, encode_json_frame,
                     pack_samples_block, unpack_samples)
from .store import LessonNotFoundError, SessionNotFoundError, SessionStore


class LiveSession:
    """Server-side state for one running session."""

    def __init__(self, session_id: str, store: SessionStore, config: RunConfig,
                 lesson: Lesson, model: LdaModel, policy: Policy,
                 run_mode: RunMode, user: str, start_epoch: int = 0):
        self.id = session_id
        self.store = store
        self.config = config
        self.lesson = lesson
        self.policy = policy
        self.run_mode = run_mode
        self.user = user
        self.pipeline = StreamPipeline(config, model, policy)
        self.pipeline.epoch_count = start_epoch
        self.state = SessionState(epoch_step_s=config.step_s)
        self.lock = threading.RLock()
        self.subscribers: list[queue.Queue] = []
        self.client_commands: deque = deque()  # COMMAND frames for the stream client
        self.stream_attached = False
        self.last_confusion = 0.0
        self._events_written = 0
        self._inject_label: str | None = None
        self.source_thread: threading.Thread | None = None
        self.source_stop = threading.Event()

    # -- pipeline ---------------------------------------------------------

    def process_block(self, block: SampleBlock) -> list[dict]:
        """Run one block through the pipeline; returns emitted state docs."""
        docs = []
        with self.lock:
            for result in self.pipeline.process_block(block):
                if self.state.mode == COMPLETED:
                    break
                session_step(self.state, self.lesson, self.policy,
                             result.detector, self.run_mode)
                self.last_confusion = result.detector.confusion
                row = make_epoch_row(result, self.state)
                self.store.append_row(self.id, row)
                self._flush_events()
                doc = self._state_doc(result)
                docs.append(doc)
                self._publish(doc)
        return docs

    def _flush_events(self):
        for event in self.state.events[self._events_written:]:
            self.store.append_event(self.id, event)
        self._events_written = len(self.state.events)

    def _state_doc(self, result) -> dict:
        return {
            "type": "state",
            "session_id": self.id,
            "epoch_index": result.epoch_index,
            "emitted_at": time.time(),
            "t_s": result.t_end_s,
            "confusion": result.detector.confusion,
            "label": result.detector.label,
            "reliable": result.detector.reliable,
            "mode": self.state.mode,
            "segment": self.state.segment_index,
            "advisories_used": self.state.advisories_used,
            "band_powers": result.band_powers,
            "policy": {
                "theta_high": self.policy.theta_high,
                "theta_low": self.policy.theta_low,
                "dwell_epochs": self.policy.dwell_epochs,
            },
        }

    def _publish(self, doc: dict):
        for q in list(self.subscribers):
            try:
                q.put_nowait(doc)
            except queue.Full:
                try:
                    q.get_nowait()  # drop the oldest for a lagging consumer
                except queue.Empty:
                    pass
                try:
                    q.put_nowait(doc)
                except queue.Full:
                    pass

    def subscribe(self) -> queue.Queue:
        q = queue.Queue(maxsize=512)
        with self.lock:
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue):
        with self.lock:
            if q in self.subscribers:
                self.subscribers.remove(q)

    # -- operator commands --------------------------------------------------

    def set_policy(self, **updates) -> Policy:
        with self.lock:
            doc = self.policy.to_dict()
            doc.update(updates)
            new_policy = Policy.from_dict(doc)  # validates the pair
            self.policy = new_policy
            self.pipeline.policy = new_policy
            self.store.append_row(self.id, {
                "kind": "command", "command": "set_policy",
                "epoch_index": self.pipeline.epoch_count,
                "policy": new_policy.to_dict(),
            })
            self.store.update_meta(self.id, policy=new_policy.to_dict())
            return new_policy

    def command(self, command: str, label: str | None = None):
        with self.lock:
            if command == "pause":
                force_pause(self.state, self.last_confusion)
            elif command == "resume":
                force_resume(self.state, self.last_confusion)
            elif command == "inject_state":
                if label not in _KNOWN_STATES:
                    raise SignalError(f"unknown mental state {label!r}")
                if self.source_thread is not None:
                    self._source_inject(label)
                if self.stream_attached:
                    self.client_commands.append(
                        {"command": "inject_state", "label": label})
            else:
                raise SignalError(f"unknown command {command!r}")
            self.store.append_row(self.id, {
                "kind": "command", "command": command,
                "epoch_index": self.pipeline.epoch_count,
                **({"label": label} if label else {}),
                "confusion": self.last_confusion,
            })
            self._flush_events()

    def _source_inject(self, label: str):
        self._inject_label = label

    def describe(self) -> dict:
        with self.lock:
            return {
                "session_id": self.id,
                "user": self.user,
                "lesson_id": self.lesson.id,
                "run_mode": self.run_mode.kind,
                "mode": self.state.mode,
                "segment": self.state.segment_index,
                "advisories_used": self.state.advisories_used,
                "epoch": self.pipeline.epoch_count,
                "confusion": self.last_confusion,
                "stream_attached": self.stream_attached,
                "policy": self.policy.to_dict(),
            }

    def stop(self):
        self.source_stop.set()
        if self.source_thread is not None:
            self.source_thread.join(timeout=5)


class SessionService:
    """Owns the store, the live sessions, and both server planes."""

    def __init__(self, store: SessionStore, config: RunConfig,
                 model: LdaModel, default_policy: Policy):
        self.store = store
        self.config = config
        self.model = model
        self.default_policy = default_policy
        self.sessions: dict[str, LiveSession] = {}
        self._lock = threading.Lock()
        self._http: ThreadingHTTPServer | None = None
        self._tcp: socketserver.ThreadingTCPServer | None = None
        self._threads: list[threading.Thread] = []

    # -- session lifecycle ---------------------------------------------------

    def create_session(self, body: dict) -> LiveSession:
        user = body.get("user", "anonymous")
        lesson_id = body.get("lesson_id")
        if not lesson_id:
            raise SignalError("lesson_id is required")
        lesson = load_lesson(self.store.get_lesson(lesson_id))
        kind = body.get("run_mode", "self_paced").upper()
        if kind not in (SELF_PACED, SYNCHRONOUS):
            raise SignalError(f"unknown run_mode {body.get('run_mode')!r}")
        cues = tuple(tuple(w) for w in body.get("cue_windows", []))
        run_mode = RunMode(kind=kind, cue_windows=cues)
        policy = self.default_policy
        if "policy" in body:
            doc = policy.to_dict()
            doc.update(body["policy"])
            policy = Policy.from_dict(doc)

        session_id = body.get("session_id")
        resume = bool(body.get("resume"))
        start_epoch = 0
        if resume and session_id:
            try:
                rows = self.store.read_rows(session_id)
                epoch_rows = [r for r in rows if r.get("kind") == "epoch"]
                if epoch_rows:
                    start_epoch = epoch_rows[-1]["epoch_index"] + 1
            except SessionNotFoundError:
                resume = False
        def meta_doc(sid):
            return {
                "session_id": sid, "user": user, "lesson_id": lesson_id,
                "run_mode": kind, "cue_windows": [list(w) for w in cues],
                "policy": policy.to_dict(), "step_s": self.config.step_s,
                "created_at": time.time(),
            }
        if resume and session_id:
            self.store.update_meta(session_id, **meta_doc(session_id))
        else:
            session_id = self.store.create_session(meta_doc(session_id),
                                                   session_id=session_id)
            self.store.update_meta(session_id, session_id=session_id)

        live = LiveSession(session_id, self.store, self.config, lesson,
                           self.model, policy, run_mode, user,
                           start_epoch=start_epoch)
        if resume and start_epoch:
            self.store.append_row(session_id, {
                "kind": "command", "command": "restart",
                "epoch_index": start_epoch,
            })
        with self._lock:
            self.sessions[session_id] = live

        source = body.get("source")
        if source and source.get("type", "synthetic") == "synthetic":
            self._start_synthetic_source(live, source, start_epoch)
        return live

    def get_session(self, session_id: str) -> LiveSession:
        with self._lock:
            if session_id not in self.sessions:
                raise SessionNotFoundError(session_id)
            return self.sessions[session_id]

    def _start_synthetic_source(self, live: LiveSession, source: dict,
                                start_epoch: int):
        if "timeline" in source:
            timeline = timeline_from_json(json.dumps(source["timeline"]))
        else:
            timeline = Timeline(((0.0, _KNOWN_STATES["CLEAR"]),))
        gen_config = self.config.generator
        if "seed" in source:
            from dataclasses import replace
            gen_config = replace(gen_config, seed=int(source["seed"]))
        start_sample = start_epoch * self.config.step_samples
        gen = SyntheticEEG(gen_config, timeline, start_sample=start_sample)
        rate = float(source.get("rate", 1.0))
        duration_s = float(source.get("duration_s", 0.0))
        step = self.config.step_samples
        block_s = step / self.config.fs

        def run():
            produced = 0.0
            next_deadline = time.monotonic()
            while not live.source_stop.is_set():
                label = live._inject_label
                if label is not None:
                    gen.inject_state(_KNOWN_STATES[label])
                    live._inject_label = None
                block = gen.next_block(step)
                live.process_block(block)
                produced += block_s
                if live.state.mode == COMPLETED:
                    break
                if duration_s and produced >= duration_s:
                    break
                if rate > 0:
                    next_deadline += block_s / rate
                    delay = next_deadline - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)

        live.source_thread = threading.Thread(
            target=run, name=f"source-{live.id}", daemon=True)
        live.source_thread.start()

    # -- servers --------------------------------------------------------------

    def start(self, http_addr: tuple[str, int], tcp_addr: tuple[str, int]):
        service = self

        class Handler(_ControlHandler):
            pass

        Handler.service = service
        self._http = ThreadingHTTPServer(http_addr, Handler)
        self._http.daemon_threads = True

        class TcpHandler(_StreamHandler):
            pass

        TcpHandler.service = service
        socketserver.ThreadingTCPServer.allow_reuse_address = True
        self._tcp = socketserver.ThreadingTCPServer(tcp_addr, TcpHandler)
        self._tcp.daemon_threads = True

        for srv in (self._http, self._tcp):
            t = threading.Thread(target=srv.serve_forever, daemon=True)
            t.start()
            self._threads.append(t)

    @property
    def http_port(self) -> int:
        return self._http.server_address[1]

    @property
    def tcp_port(self) -> int:
        return self._tcp.server_address[1]

    def stop(self):
        with self._lock:
            sessions = list(self.sessions.values())
        for s in sessions:
            s.stop()
        for srv in (self._http, self._tcp):
            if srv is not None:
                srv.shutdown()
                srv.server_close()
        self.store.close()


_ROUTES = [
    ("GET", re.compile(r"^/health$"), "health"),
    ("GET", re.compile(r"^/sessions$"), "list_sessions"),
    ("POST", re.compile(r"^/sessions$"), "create_session"),
    ("GET", re.compile(r"^/sessions/([^/]+)$"), "get_session"),
    ("POST", re.compile(r"^/sessions/([^/]+)/policy$"), "set_policy"),
    ("POST", re.compile(r"^/sessions/([^/]+)/command$"), "command"),
    ("GET", re.compile(r"^/sessions/([^/]+)/events$"), "events"),
    ("GET", re.compile(r"^/sessions/([^/]+)/stream$"), "stream"),
    ("GET", re.compile(r"^/lessons$"), "list_lessons"),
    ("GET", re.compile(r"^/lessons/([^/]+)$"), "get_lesson"),
    ("PUT", re.compile(r"^/lessons/([^/]+)$"), "put_lesson"),
]


class _ControlHandler(BaseHTTPRequestHandler):
    service: SessionService
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def _dispatch(self, method: str):
        path = urlparse(self.path).path
        for m, pattern, name in _ROUTES:
            if m != method:
                continue
            match = pattern.match(path)
            if match:
                try:
                    getattr(self, "h_" + name)(*match.groups())
                except (SessionNotFoundError, LessonNotFoundError) as exc:
                    self._json(404, {"error": str(exc)})
                except (SignalError, LessonValidationError, ValueError) as exc:
                    self._json(400, {"error": str(exc)})
                except BrokenPipeError:
                    pass
                return
        self._json(404, {"error": f"no route for {method} {path}"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SignalError(f"malformed JSON body: {exc}") from exc

    def _json(self, code: int, doc: dict):
        data = json.dumps(doc).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    # -- handlers -----------------------------------------------------------

    def h_health(self):
        self._json(200, {"ok": True})

    def h_list_sessions(self):
        self._json(200, {"sessions": self.service.store.list_sessions()})

    def h_create_session(self):
        live = self.service.create_session(self._body())
        self._json(200, {"session_id": live.id})

    def h_get_session(self, session_id):
        try:
            live = self.service.get_session(session_id)
            self._json(200, live.describe())
        except SessionNotFoundError:
            meta = self.service.store.get_meta(session_id)  # raises 404 if unknown
            meta["live"] = False
            self._json(200, meta)

    def h_set_policy(self, session_id):
        live = self.service.get_session(session_id)
        body = self._body()
        allowed = {"theta_high", "theta_low", "dwell_epochs",
                   "refractory_epochs", "max_advisories_per_segment"}
        unknown = set(body) - allowed
        if unknown:
            raise SignalError(f"unknown policy fields: {sorted(unknown)}")
        policy = live.set_policy(**body)
        self._json(200, {"policy": policy.to_dict()})

    def h_command(self, session_id):
        live = self.service.get_session(session_id)
        body = self._body()
        command = body.get("command")
        live.command(command, label=body.get("label"))
        self._json(200, {"ok": True, "command": command})

    def h_events(self, session_id):
        events = self.service.store.read_events(session_id)
        self._json(200, {"events": events})

    def h_stream(self, session_id):
        live = self.service.get_session(session_id)
        q = live.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Connection", "close")
            self.end_headers()
            while True:
                try:
                    doc = q.get(timeout=5.0)
                    line = (json.dumps(doc) + "\n").encode("utf-8")
                except queue.Empty:
                    line = b'{"type":"heartbeat"}\n'
                self.wfile.write(line)
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            live.unsubscribe(q)
            self.close_connection = True

    def h_list_lessons(self):
        self._json(200, {"lessons": self.service.store.list_lessons()})

    def h_get_lesson(self, lesson_id):
        self._json(200, self.service.store.get_lesson(lesson_id))

    def h_put_lesson(self, lesson_id):
        manifest = self._body()
        manifest["id"] = lesson_id
        load_lesson(manifest)  # validate before persisting
        self.service.store.put_lesson(lesson_id, manifest)
        self._json(200, {"ok": True, "lesson_id": lesson_id})


class _StreamHandler(socketserver.BaseRequestHandler):
    """One learner-client connection: HELLO then SAMPLES in, STATE out."""

    service: SessionService

    def setup(self):
        self.decoder = FrameDecoder()
        self.live: LiveSession | None = None
        self.send_lock = threading.Lock()
        self.ingest: deque = deque()
        self.ingest_cv = threading.Condition()
        self.dropped = 0
        self.closing = False

    def _send(self, data: bytes):
        with self.send_lock:
            self.request.sendall(data)

    def _send_json(self, frame_type, doc: dict):
        self._send(encode_json_frame(frame_type, doc))

    def handle(self):
        self.request.settimeout(30.0)
        worker = None
        try:
            while True:
                try:
                    chunk = self.request.recv(65536)
                except socket.timeout:
                    continue
                if not chunk:
                    break
                try:
                    frames = self.decoder.feed(chunk)
                except ProtocolError as exc:
                    try:
                        self._send_json(FrameType.ERROR,
                                        {"error": str(exc), "fatal": True})
                    except OSError:
                        pass
                    break
                for frame in frames:
                    if frame.type == FrameType.HELLO:
                        if not self._handle_hello(frame):
                            return
                        worker = threading.Thread(target=self._worker, daemon=True)
                        worker.start()
                    elif frame.type == FrameType.SAMPLES:
                        if self.live is None:
                            self._send_json(FrameType.ERROR,
                                            {"error": "HELLO required first",
                                             "fatal": True})
                            return
                        self._enqueue(frame.payload)
                    elif frame.type == FrameType.ACK:
                        pass
                    else:
                        self._send_json(FrameType.ERROR,
                                        {"error": f"unexpected {frame.type.name}",
                                         "fatal": False})
        finally:
            self.closing = True
            with self.ingest_cv:
                self.ingest_cv.notify_all()
            if worker is not None:
                worker.join(timeout=5)
            if self.live is not None:
                self.live.stream_attached = False

    def _handle_hello(self, frame) -> bool:
        try:
            doc = decode_json_payload(frame)
        except ProtocolError as exc:
            self._send_json(FrameType.ERROR, {"error": str(exc), "fatal": True})
            return False
        session_id = doc.get("session_id", "")
        try:
            live = self.service.get_session(session_id)
        except SessionNotFoundError:
            self._send_json(FrameType.ERROR,
                            {"error": f"unknown session {session_id!r}",
                             "fatal": True})
            return False
        expected_ch = live.config.generator.montage.n_channels
        if doc.get("fs") != live.config.fs or doc.get("n_channels") != expected_ch:
            self._send_json(FrameType.ERROR, {
                "error": f"stream must be {expected_ch} channels at "
                         f"{live.config.fs} Hz", "fatal": True})
            return False
        if live.stream_attached:
            self._send_json(FrameType.ERROR,
                            {"error": "a stream client is already attached",
                             "fatal": True})
            return False
        live.stream_attached = True
        self.live = live
        self._send_json(FrameType.ACK, {"ok": True, "session_id": session_id})
        return True

    def _enqueue(self, payload: bytes):
        limit = self.live.config.stream_buffer_frames
        with self.ingest_cv:
            if len(self.ingest) >= limit:
                self.ingest.popleft()
                self.dropped += 1
            self.ingest.append(payload)
            self.ingest_cv.notify()

    def _worker(self):
        live = self.live
        gap_pending = False
        while True:
            with self.ingest_cv:
                while not self.ingest and not self.closing:
                    self.ingest_cv.wait(timeout=0.5)
                if self.closing and not self.ingest:
                    return
                if self.dropped:
                    gap_pending = True
                    dropped, self.dropped = self.dropped, 0
                payload = self.ingest.popleft() if self.ingest else None
            if payload is None:
                continue
            if gap_pending:
                live.pipeline.resync()
                try:
                    self._send_json(FrameType.ERROR, {
                        "error": "ingest buffer overflow; stream gap",
                        "fatal": False, "gap": True, "dropped": dropped})
                except OSError:
                    return
                gap_pending = False
            try:
                first, samples = unpack_samples(payload)
            except ProtocolError as exc:
                try:
                    self._send_json(FrameType.ERROR,
                                    {"error": str(exc), "fatal": True})
                except OSError:
                    pass
                return
            block = SampleBlock(first_sample_index=first, samples=samples,
                                fs=live.config.fs)
            try:
                docs = live.process_block(block)
            except SignalError as exc:
                # stream gap or shape problem: resync and tell the client
                live.pipeline.resync()
                try:
                    self._send_json(FrameType.ERROR,
                                    {"error": str(exc), "fatal": False,
                                     "gap": True})
                except OSError:
                    return
                continue
            try:
                for doc in docs:
                    self._send_json(FrameType.STATE, doc)
                while live.client_commands:
                    self._send_json(FrameType.COMMAND, live.client_commands.popleft())
            except OSError:
                return


def stream_client(host: str, port: int, session_id: str, gen: SyntheticEEG,
                  step_samples: int, rate: float = 0.0,
                  duration_s: float | None = None,
                  on_state=None) -> int:
    """Drive a live session over TCP from a synthetic source.

    Sends HELLO then SAMPLES blocks (optionally paced to ``rate`` x real
    time); applies COMMAND inject_state frames to the generator. Returns the
    number of STATE frames received.
    """
    fs = gen.config.fs
    n_ch = gen.config.n_channels
    states = 0
    with socket.create_connection((host, port), timeout=10) as sock:
        sock.settimeout(10.0)
        decoder = FrameDecoder()
        sock.sendall(encode_json_frame(FrameType.HELLO, {
            "session_id": session_id, "fs": fs, "n_channels": n_ch}))
        # wait for the handshake ACK
        hello_ok = False
        while not hello_ok:
            frames = decoder.feed(sock.recv(65536))
            for frame in frames:
                if frame.type == FrameType.ACK:
                    hello_ok = True
                elif frame.type == FrameType.ERROR:
                    raise ProtocolError(decode_json_payload(frame).get("error"))
        block_s = step_samples / fs
        next_deadline = time.monotonic()
        sent_s = 0.0
        sock.settimeout(0.05)
        while duration_s is None or sent_s < duration_s:
            block = gen.next_block(step_samples)
            sock.sendall(encode_frame(FrameType.SAMPLES, pack_samples_block(block)))
            sent_s += block_s
            try:
                chunk = sock.recv(65536)
                if not chunk:
                    break
            except socket.timeout:
                chunk = b""
            if chunk:
                for frame in decoder.feed(chunk):
                    if frame.type == FrameType.STATE:
                        states += 1
                        if on_state is not None:
                            on_state(decode_json_payload(frame))
                    elif frame.type == FrameType.COMMAND:
                        doc = decode_json_payload(frame)
                        if doc.get("command") == "inject_state":
                            gen.inject_state(_KNOWN_STATES[doc["label"]])
                            sock.sendall(encode_json_frame(
                                FrameType.ACK, {"ok": True, "ack": "inject_state"}))
                    elif frame.type == FrameType.ERROR:
                        doc = decode_json_payload(frame)
                        if doc.get("fatal"):
                            raise ProtocolError(doc.get("error"))
            if rate > 0:
                next_deadline += block_s / rate
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
    return states
