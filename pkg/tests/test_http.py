import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from visreason.backends import (
    BackendProfile,
    BackendRole,
    BackendUnavailable,
    Gateway,
    HttpTransport,
    ProtocolError,
    RoleProfiles,
    TransientBackendError,
)
from visreason.backends.http_api import build_wire_payload, parse_wire_response
from visreason.backends.profiles import ModelRequest
from visreason.records import ImageRef

LLM = BackendRole.TEXT_LLM
CAP = BackendRole.CAPTIONER
TXT = BackendRole.TEXT_EMBEDDER
MME = BackendRole.MULTIMODAL_EMBEDDER


class StubBackend(BaseHTTPRequestHandler):
    """Records requests and serves canned responses per path."""

    requests_seen: list = []
    responses: dict = {}  # path -> list of (status, body-bytes | dict)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length)) if length else None
        StubBackend.requests_seen.append(
            {"path": self.path, "headers": dict(self.headers), "body": body}
        )
        queue = StubBackend.responses.get(self.path, [])
        status, payload = queue.pop(0) if queue else (404, {"error": "no route"})
        raw = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def log_message(self, *args):
        pass


@pytest.fixture()
def server():
    httpd = HTTPServer(("127.0.0.1", 0), StubBackend)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    StubBackend.requests_seen = []
    StubBackend.responses = {}
    yield f"http://127.0.0.1:{httpd.server_address[1]}"
    httpd.shutdown()
    thread.join(timeout=5)


def profile(role, base, path, **overrides):
    fields = dict(
        role=role,
        model_name=f"live-{role.value}",
        endpoint=f"{base}{path}",
        retry_backoff=0.0,
    )
    fields.update(overrides)
    return BackendProfile(**fields)


def gateway_for(base, roles_paths, **overrides):
    profiles = {
        role: profile(role, base, path, **overrides) for role, path in roles_paths.items()
    }
    return Gateway(RoleProfiles(profiles), HttpTransport())


# ---------------------------------------------------------------------------
# Wire payloads and response parsing (no server needed)
# ---------------------------------------------------------------------------


def test_chat_wire_payload_passthrough():
    request = ModelRequest(
        LLM,
        "m1",
        {"messages": [{"role": "user", "content": "hi"}], "temperature": 0, "max_tokens": 64, "seed": 0},
    )
    body = build_wire_payload(request)
    assert body["model"] == "m1"
    assert body["messages"] == [{"role": "user", "content": "hi"}]
    assert body["max_tokens"] == 64


def test_caption_payload_remote_uri_stays_uri():
    request = ModelRequest(CAP, "c", {"prompt": "look", "image": "https://host/x.png"})
    body = build_wire_payload(request)
    assert body["image"] == {"uri": "https://host/x.png"}


def test_caption_payload_local_file_inlined(tmp_path):
    img = tmp_path / "pic.png"
    img.write_bytes(b"\x89PNG-fake-bytes")
    request = ModelRequest(CAP, "c", {"prompt": "look", "image": str(img)})
    body = build_wire_payload(request)
    assert base64.b64decode(body["image"]["base64"]) == b"\x89PNG-fake-bytes"


def test_embedding_payloads():
    body = build_wire_payload(ModelRequest(TXT, "e", {"input": ["a", "b"]}))
    assert body == {"model": "e", "input": ["a", "b"]}
    body = build_wire_payload(
        ModelRequest(MME, "e", {"inputs": [{"text": "t", "image": "https://host/i.png"}]})
    )
    assert body["inputs"] == [{"text": "t", "image": {"uri": "https://host/i.png"}}]


def test_parse_wire_responses():
    assert parse_wire_response(LLM, {"choices": [{"message": {"content": "hey"}}]}) == "hey"
    assert parse_wire_response(CAP, {"caption": "a dog"}) == "a dog"
    assert parse_wire_response(TXT, {"data": [{"embedding": [1.0, 2.0]}]}) == [[1.0, 2.0]]
    with pytest.raises(ProtocolError, match="malformed"):
        parse_wire_response(LLM, {"choices": []})
    with pytest.raises(ProtocolError, match="malformed"):
        parse_wire_response(CAP, {"unexpected": True})


# ---------------------------------------------------------------------------
# Live round trips against a local stub server
# ---------------------------------------------------------------------------


def test_chat_round_trip(server):
    StubBackend.responses["/chat"] = [
        (200, {"choices": [{"message": {"content": "All clear."}}]})
    ]
    gateway = gateway_for(server, {LLM: "/chat"})
    assert gateway.complete("ping", role=LLM) == "All clear."
    seen = StubBackend.requests_seen[0]
    assert seen["body"]["model"] == "live-text_llm"
    assert seen["body"]["messages"] == [{"role": "user", "content": "ping"}]
    assert "Authorization" not in seen["headers"]


def test_bearer_token_sent_from_env(server, monkeypatch):
    monkeypatch.setenv("STUB_KEY", "sekrit")
    StubBackend.responses["/chat"] = [
        (200, {"choices": [{"message": {"content": "ok"}}]})
    ]
    gateway = gateway_for(server, {LLM: "/chat"}, api_key_env="STUB_KEY")
    gateway.complete("ping", role=LLM)
    assert StubBackend.requests_seen[0]["headers"]["Authorization"] == "Bearer sekrit"


def test_missing_api_key_is_protocol_error(server, monkeypatch):
    monkeypatch.delenv("STUB_KEY", raising=False)
    gateway = gateway_for(server, {LLM: "/chat"}, api_key_env="STUB_KEY")
    with pytest.raises(ProtocolError, match="STUB_KEY"):
        gateway.complete("ping", role=LLM)
    assert StubBackend.requests_seen == []  # never reached the wire


def test_caption_round_trip_with_local_image(server, tmp_path):
    img = tmp_path / "cat.png"
    img.write_bytes(b"meow-bytes")
    StubBackend.responses["/cap"] = [(200, {"caption": "a cat on a mat"})]
    gateway = gateway_for(server, {CAP: "/cap"})
    caption = gateway.caption(ImageRef("i0", str(img)), "describe")
    assert caption == "a cat on a mat"
    sent = StubBackend.requests_seen[0]["body"]
    assert base64.b64decode(sent["image"]["base64"]) == b"meow-bytes"


def test_embed_round_trips(server):
    StubBackend.responses["/emb"] = [(200, {"data": [{"embedding": [1.0, 0.0, 3.0]}]})]
    StubBackend.responses["/mm"] = [
        (200, {"data": [{"embedding": [2.0, 2.0]}, {"embedding": [4.0, 0.0]}]})
    ]
    gateway = gateway_for(server, {TXT: "/emb", MME: "/mm"})
    vec = gateway.embed_text("hello")
    assert list(vec) == [1.0, 0.0, 3.0]
    pooled = gateway.embed_multimodal(
        "t", [ImageRef("a", "https://h/a.png"), ImageRef("b", "https://h/b.png")]
    )
    assert list(pooled) == [3.0, 1.0]  # mean of the two rows
    sent = StubBackend.requests_seen[-1]["body"]
    assert [pair["image"]["uri"] for pair in sent["inputs"]] == [
        "https://h/a.png",
        "https://h/b.png",
    ]


def test_500_then_success_retries(server):
    StubBackend.responses["/chat"] = [
        (500, {"error": "boom"}),
        (200, {"choices": [{"message": {"content": "recovered"}}]}),
    ]
    gateway = gateway_for(server, {LLM: "/chat"})
    assert gateway.complete("ping", role=LLM) == "recovered"
    assert len(StubBackend.requests_seen) == 2
    record = gateway.records[-1]
    assert record.attempts == 2


def test_429_exhausts_retries_then_unavailable(server):
    StubBackend.responses["/chat"] = [(429, {"error": "slow down"})] * 3
    gateway = gateway_for(server, {LLM: "/chat"}, max_retries=2)
    with pytest.raises(BackendUnavailable) as exc_info:
        gateway.complete("ping", role=LLM)
    assert len(StubBackend.requests_seen) == 3  # 1 + 2 retries
    assert isinstance(exc_info.value.last_error, TransientBackendError)


def test_400_is_protocol_error_without_retry(server):
    StubBackend.responses["/chat"] = [(400, {"error": "bad request"})]
    gateway = gateway_for(server, {LLM: "/chat"})
    with pytest.raises(ProtocolError, match="400"):
        gateway.complete("ping", role=LLM)
    assert len(StubBackend.requests_seen) == 1


def test_non_json_body_is_protocol_error(server):
    StubBackend.responses["/chat"] = [(200, b"<html>oops</html>")]
    gateway = gateway_for(server, {LLM: "/chat"})
    with pytest.raises(ProtocolError, match="not JSON"):
        gateway.complete("ping", role=LLM)


def test_connection_refused_is_transient():
    # no server listening on this port
    gateway = gateway_for("http://127.0.0.1:9", {LLM: "/chat"}, max_retries=0)
    with pytest.raises(BackendUnavailable) as exc_info:
        gateway.complete("ping", role=LLM)
    assert isinstance(exc_info.value.last_error, TransientBackendError)
