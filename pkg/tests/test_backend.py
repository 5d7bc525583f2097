"""Backends: scripted mock, record/replay, HTTP against a local stub server."""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from mlforge.backend import (
    BackendState,
    HttpBackend,
    Message,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    Session,
    TranscriptStore,
    request_digest,
    reset_memory,
)
from mlforge.errors import BackendError, ReplayDivergenceError

STATE = BackendState(kind="test", model="toy", temperature=0.0)


def msg(content: str) -> list[Message]:
    return [Message("user", content)]


class TestScripted:
    def test_queue_then_exhaustion(self):
        backend = ScriptedBackend(["A", "B"])
        assert backend.complete(msg("x"), STATE) == "A"
        assert backend.complete(msg("x"), STATE) == "B"
        with pytest.raises(BackendError, match="exhausted"):
            backend.complete(msg("x"), STATE)

    def test_default_keeps_answering(self):
        backend = ScriptedBackend(["A"], default="junk")
        assert backend.complete(msg("x"), STATE) == "A"
        for _ in range(5):
            assert backend.complete(msg("x"), STATE) == "junk"


class TestDigest:
    def test_stable_under_equivalent_construction(self):
        a = [Message(role="user", content="hi"), Message("assistant", "yo")]
        b = [Message(content="hi", role="user"), Message("assistant", "yo")]
        assert request_digest(a, STATE) == request_digest(b, STATE)

    def test_sensitive_to_content_and_state(self):
        base = request_digest(msg("hi"), STATE)
        assert base != request_digest(msg("hi!"), STATE)
        other_model = BackendState(kind="test", model="other")
        assert base != request_digest(msg("hi"), other_model)


class TestRecordReplay:
    def test_record_then_replay_identical_zero_network(self, tmp_path):
        store = TranscriptStore(tmp_path / "transcript.jsonl")
        inner = ScriptedBackend(["first", "second"])
        recorder = RecordingBackend(inner, store)
        out1 = [recorder.complete(msg("a"), STATE), recorder.complete(msg("b"), STATE)]

        replay = ReplayBackend(store)
        out2 = [replay.complete(msg("a"), STATE), replay.complete(msg("b"), STATE)]
        assert out1 == out2
        assert inner.calls == 2  # replay made no further inner calls

    def test_divergence_names_request_index(self, tmp_path):
        store = TranscriptStore(tmp_path / "transcript.jsonl")
        RecordingBackend(ScriptedBackend(["x", "y"]), store).complete(msg("a"), STATE)
        RecordingBackend(ScriptedBackend(["y"]), store).complete(msg("b"), STATE)
        replay = ReplayBackend(store)
        replay.complete(msg("a"), STATE)
        with pytest.raises(ReplayDivergenceError) as excinfo:
            replay.complete(msg("DIFFERENT"), STATE)
        assert excinfo.value.index == 1

    def test_exhausted_transcript(self, tmp_path):
        store = TranscriptStore(tmp_path / "transcript.jsonl")
        RecordingBackend(ScriptedBackend(["x"]), store).complete(msg("a"), STATE)
        replay = ReplayBackend(store)
        replay.complete(msg("a"), STATE)
        with pytest.raises(BackendError, match="exhausted"):
            replay.complete(msg("a"), STATE)


class _StubHandler(BaseHTTPRequestHandler):
    fail_first = 0

    def do_POST(self):
        cls = type(self)
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        if cls.fail_first > 0:
            cls.fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        reply = {
            "choices": [{"message": {
                "role": "assistant",
                "content": f"echo:{body['messages'][-1]['content']}",
            }}],
        }
        payload = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


class TestHttp:
    def test_returns_stub_text(self, stub_server):
        backend = HttpBackend(base_url=stub_server, api_key="k")
        assert backend.complete(msg("ping"), STATE) == "echo:ping"

    def test_retries_transient_failures(self, stub_server):
        _StubHandler.fail_first = 2
        backend = HttpBackend(base_url=stub_server, api_key="k", backoff=0.01)
        state = BackendState(kind="http", model="toy", retry_budget=3)
        assert backend.complete(msg("pong"), state) == "echo:pong"

    def test_exhausts_retry_budget(self, stub_server):
        _StubHandler.fail_first = 10
        backend = HttpBackend(base_url=stub_server, api_key="k", backoff=0.01)
        state = BackendState(kind="http", model="toy", retry_budget=1)
        with pytest.raises(BackendError, match="unavailable"):
            backend.complete(msg("pong"), state)
        _StubHandler.fail_first = 0


class TestSession:
    def test_memory_accumulates_and_resets(self):
        backend = ScriptedBackend([f"r{i}" for i in range(9)])
        session = Session(backend, STATE)
        for i in range(4):
            session.ask(f"q{i}")
        assert len(session.turns) == 8
        out = reset_memory(session)
        assert out is session
        assert session.turns == []
        assert session.state.model == "toy"

    def test_reset_on_fresh_session_is_identity(self):
        session = Session(ScriptedBackend([]), STATE)
        reset_memory(session)
        assert session.turns == []

    def test_context_included_in_requests(self):
        backend = ScriptedBackend(["a", "b"])
        session = Session(backend, STATE, system_prompt="sys")
        session.ask("one")
        session.ask("two")
        last_request = backend.requests[-1]
        assert last_request[0].content == "sys"
        assert [m.content for m in last_request[1:]] == ["one", "a", "two"]
