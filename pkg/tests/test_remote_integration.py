"""Remote-backend integration against a live mock chat-completions server:
the model normalizes free phrasing into canonical instructions, and the
deterministic grammar does the rest."""

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from coblock.backends import AgentPrompt, BackendConfig, ProviderError, RemoteBackend
from coblock.pipeline import Pipeline

# free-phrasing -> canonical instruction, the mock model's entire knowledge
TRANSLATIONS = {
    "Could you pop a blue screw in at column five, row four?":
        "Place a blue screw at the 5th column, 4th row.",
    "Stick a crimson screw beside that blue one, then another crimson screw above it.":
        "Place a red screw next to the blue screw, and put a red screw on top.",
    "Let's call that whole thing a C15, okay?":
        "This is what I call a C15",
    "Another C15 please, over at column nine, row eight.":
        "Make me another C15 at the 9th column, 8th row.",
}


class _MockChatCompletions(BaseHTTPRequestHandler):
    behavior = "normal"  # "normal" | "fenced" | "server-error"

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        if self.behavior == "server-error":
            self.send_response(500)
            self.end_headers()
            self.wfile.write(b"boom")
            return

        system = payload["messages"][0]["content"]
        user = next(m["content"] for m in reversed(payload["messages"]) if m["role"] == "user")
        if "structural plans" in system:  # parser role
            plan = TRANSLATIONS.get(user, user)
            content = json.dumps({"structures": [{"plan": plan, "name": ""}]})
        elif "relative spatial references" in system:  # locator role
            content = json.dumps({"instruction": user})
        else:
            content = "place(screw, blue, 4, 5, 1)"
        if self.behavior == "fenced":
            content = f"Here you go!\n```json\n{content}\n```\nHope that helps."

        body = json.dumps({"choices": [{"message": {"role": "assistant", "content": content}}]})
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(body.encode())

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def mock_server():
    server = HTTPServer(("127.0.0.1", 0), _MockChatCompletions)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


@pytest.fixture
def remote_pipeline(mock_server):
    _MockChatCompletions.behavior = "normal"
    backend = RemoteBackend(BackendConfig(kind="remote", endpoint=mock_server, model="mock", timeout=5))
    return Pipeline(backend=backend)


def test_remote_backend_round_trip(mock_server):
    _MockChatCompletions.behavior = "normal"
    backend = RemoteBackend(BackendConfig(kind="remote", endpoint=mock_server, model="mock", timeout=5))
    text = backend.complete(
        AgentPrompt.for_role("parser"),
        [{"role": "user", "content": "Could you pop a blue screw in at column five, row four?"}],
    )
    assert "5th column" in text


def test_remote_pipeline_normalizes_paraphrase(remote_pipeline):
    ctx = remote_pipeline.new_session()
    out = remote_pipeline.process_turn(ctx, "Could you pop a blue screw in at column five, row four?")
    assert out.kind == "execute"
    assert out.actions == [
        {"action": "place", "part": "screw", "color": "blue", "x": 5, "y": 4, "z": 1}
    ]


def test_remote_pipeline_full_naming_dialogue(remote_pipeline):
    ctx = remote_pipeline.new_session()
    kinds = [
        remote_pipeline.process_turn(ctx, turn).kind
        for turn in (
            "Could you pop a blue screw in at column five, row four?",
            "Stick a crimson screw beside that blue one, then another crimson screw above it.",
            "Let's call that whole thing a C15, okay?",
            "Another C15 please, over at column nine, row eight.",
        )
    ]
    assert kinds == ["execute", "execute", "stored", "execute"]
    assert len(ctx.grid.parts) == 6


def test_remote_pipeline_handles_fenced_output(mock_server):
    _MockChatCompletions.behavior = "fenced"
    backend = RemoteBackend(BackendConfig(kind="remote", endpoint=mock_server, model="mock", timeout=5))
    pipeline = Pipeline(backend=backend)
    ctx = pipeline.new_session()
    out = pipeline.process_turn(ctx, "Could you pop a blue screw in at column five, row four?")
    assert out.kind == "execute"


def test_remote_provider_error_is_typed_and_surfaced(mock_server):
    _MockChatCompletions.behavior = "server-error"
    backend = RemoteBackend(BackendConfig(kind="remote", endpoint=mock_server, model="mock", timeout=5))
    with pytest.raises(ProviderError) as err:
        backend.complete(AgentPrompt.for_role("parser"), [{"role": "user", "content": "x"}])
    assert err.value.status == 500
    pipeline = Pipeline(backend=backend)
    ctx = pipeline.new_session()
    out = pipeline.process_turn(ctx, "Place a blue screw at the 5th column, 4th row.")
    assert out.kind == "error"
    assert ctx.grid.occupancy == {}
