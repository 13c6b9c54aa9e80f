import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from proclab.backends import (
    FramePayload,
    RemoteBackend,
    build_chat_body,
    remote_annotator,
)
from proclab.errors import AuthError, BackendUnavailable, ConfigError


class StubHandler(BaseHTTPRequestHandler):
    script = []          # list of (status, payload) consumed per request
    requests = []        # captured bodies

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).requests.append((dict(self.headers), body))
        status, payload = (type(self).script.pop(0)
                           if type(self).script else (200, _ok("fallback")))
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(json.dumps(payload).encode())

    def log_message(self, *args):
        pass


def _ok(text):
    return {"choices": [{"message": {"content": text}}]}


@pytest.fixture
def stub_server():
    StubHandler.script = []
    StubHandler.requests = []
    server = ThreadingHTTPServer(("127.0.0.1", 0), StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions", StubHandler
    server.shutdown()


def backend_for(url, **kw):
    kw.setdefault("backoff_base", 0.0)
    return RemoteBackend(endpoint=url, model="test-model", token="tok", **kw)


FRAMES = [FramePayload(index=3, instruction="t", image_bytes=b"AAA"),
          FramePayload(index=7, instruction="t", image_bytes=b"BBB")]


def test_retry_429_then_success(stub_server):
    url, handler = stub_server
    handler.script = [(429, {"error": "slow down"}), (200, _ok("1. Grasp the cup"))]
    text = backend_for(url).plan("t", FRAMES)
    assert text == "1. Grasp the cup"
    assert len(handler.requests) == 2


def test_unavailable_after_exhausted_retries(stub_server):
    url, handler = stub_server
    handler.script = [(500, {}), (500, {}), (500, {})]
    with pytest.raises(BackendUnavailable):
        backend_for(url, max_attempts=3).plan("t", FRAMES)
    assert len(handler.requests) == 3


def test_auth_error_not_retried(stub_server):
    url, handler = stub_server
    handler.script = [(401, {})]
    with pytest.raises(AuthError):
        backend_for(url).plan("t", FRAMES)
    assert len(handler.requests) == 1


def test_timeouts_become_unavailable():
    # unroutable per RFC 5737; connection fails immediately or times out
    backend = RemoteBackend(endpoint="http://192.0.2.1:9/v1", model="m",
                            token="tok", timeout=0.2, max_attempts=3,
                            backoff_base=0.0)
    with pytest.raises(BackendUnavailable):
        backend.plan("t", FRAMES)


def test_missing_token_is_auth_error(monkeypatch):
    monkeypatch.delenv("ANNOTATOR_TOKEN", raising=False)
    monkeypatch.setenv("ANNOTATOR_ENDPOINT", "http://example.invalid")
    monkeypatch.setenv("ANNOTATOR_MODEL", "m")
    with pytest.raises(AuthError):
        remote_annotator()


def test_missing_endpoint_is_config_error(monkeypatch):
    for var in ("ANNOTATOR_ENDPOINT", "ANNOTATOR_MODEL", "ANNOTATOR_TOKEN"):
        monkeypatch.delenv(var, raising=False)
    with pytest.raises(ConfigError):
        remote_annotator()


def test_wire_body_matches_golden_fixture():
    body = build_chat_body("test-model", "describe the scene", FRAMES, indexed=True)
    golden = {
        "model": "test-model",
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": "describe the scene"},
                {"type": "text", "text": "<frame_id: 3>"},
                {"type": "image_url",
                 "image_url": {"url": "data:image/png;base64,<B64>"}},
                {"type": "text", "text": "<frame_id: 7>"},
                {"type": "image_url",
                 "image_url": {"url": "data:image/png;base64,<B64>"}},
            ],
        }],
        "temperature": 0,
    }

    def scrub(payload):
        out = json.loads(json.dumps(payload))
        for part in out["messages"][0]["content"]:
            if part["type"] == "image_url":
                url = part["image_url"]["url"]
                prefix, b64 = url.split("base64,", 1)
                base64.b64decode(b64)  # payload must be real base64
                part["image_url"]["url"] = prefix + "base64,<B64>"
        return out

    assert json.dumps(scrub(body), sort_keys=True) == json.dumps(golden, sort_keys=True)


def test_request_headers_and_temperature(stub_server):
    url, handler = stub_server
    handler.script = [(200, _ok("1. Grasp the cup"))]
    backend_for(url).plan("do it", FRAMES)
    headers, body = handler.requests[0]
    assert headers["Authorization"] == "Bearer tok"
    assert body["temperature"] == 0
    assert body["model"] == "test-model"
    # prompt text appears first, then interleaved image parts
    assert body["messages"][0]["content"][0]["type"] == "text"
    assert "do it" in body["messages"][0]["content"][0]["text"]


def test_frames_without_bytes_rejected():
    with pytest.raises(ConfigError):
        build_chat_body("m", "p", [FramePayload(index=0, instruction="t")])
