import json

import pytest
from fastapi.testclient import TestClient

from coblock.service import (
    BadConfig,
    CorruptLog,
    ServiceConfig,
    SessionService,
    create_app,
    read_architect_turns,
)


@pytest.fixture
def service(tmp_path):
    return SessionService(ServiceConfig(data_dir=tmp_path / "data"))


@pytest.fixture
def client(service):
    return TestClient(create_app(service=service))


def make_session(client) -> str:
    res = client.post("/sessions", json={})
    assert res.status_code == 200
    return res.json()["session_id"]


def test_create_session_empty_grid(client):
    res = client.post("/sessions", json={})
    body = res.json()
    assert body["grid"] == []
    assert body["session_id"]


def test_two_creates_distinct_ids(client):
    assert make_session(client) != make_session(client)


def test_create_with_missing_shape_library_is_bad_config(client):
    res = client.post("/sessions", json={"shape_library": "/nonexistent/shapes.json"})
    assert res.status_code == 400


def test_instruction_executes_and_updates_state(client):
    sid = make_session(client)
    res = client.post(f"/sessions/{sid}/instruction",
                      json={"text": "Place a blue screw at the 5th column, 4th row."})
    body = res.json()
    assert body["kind"] == "execute"
    state = client.get(f"/sessions/{sid}/state").json()
    assert len(state["grid"]) == 1
    assert state["grid"][0]["part"] == "screw"


def test_clarification_flow_and_answer_endpoint(client):
    sid = make_session(client)
    res = client.post(f"/sessions/{sid}/instruction",
                      json={"text": "Place a nut at the 2nd column, 2nd row."})
    assert res.json()["kind"] == "clarify"
    # a second instruction while a question is pending is refused
    busy = client.post(f"/sessions/{sid}/instruction", json={"text": "Place a bolt at the 1st column, 1st row."})
    assert busy.status_code == 409
    # grid unchanged during clarification
    state = client.get(f"/sessions/{sid}/state").json()
    assert state["grid"] == []
    assert state["pending_question"] is not None
    done = client.post(f"/sessions/{sid}/answer", json={"text": "green"})
    assert done.json()["kind"] == "execute"


def test_answer_without_question_is_conflict(client):
    sid = make_session(client)
    res = client.post(f"/sessions/{sid}/answer", json={"text": "green"})
    assert res.status_code == 409


def test_unknown_session_404(client):
    assert client.get("/sessions/nope/state").status_code == 404
    assert client.post("/sessions/nope/instruction", json={"text": "x"}).status_code == 404


def test_event_stream_order(client):
    sid = make_session(client)
    client.post(f"/sessions/{sid}/instruction",
                json={"text": "Place a blue screw at the 5th column, 4th row."})
    client.post(f"/sessions/{sid}/instruction",
                json={"text": "Place a nut at the 2nd column, 2nd row."})
    events = client.get(f"/sessions/{sid}/events/poll?after=-1").json()["events"]
    kinds = [e["type"] for e in events]
    assert kinds == ["instruction", "grid-update", "instruction", "question"]
    seqs = [e["seq"] for e in events]
    assert seqs == sorted(seqs)


def test_sse_stream_format(client):
    sid = make_session(client)
    client.post(f"/sessions/{sid}/instruction",
                json={"text": "Place a blue screw at the 5th column, 4th row."})
    with client.stream("GET", f"/sessions/{sid}/events?after=-1&idle_timeout=0.5") as res:
        assert res.headers["content-type"].startswith("text/event-stream")
        collected = ""
        for chunk in res.iter_text():
            collected += chunk
            if "grid-update" in collected:
                break
    assert "event: instruction" in collected
    assert "event: grid-update" in collected
    payload = [l for l in collected.splitlines() if l.startswith("data: ")][1]
    assert json.loads(payload[len("data: "):])["grid"][0]["part"] == "screw"


def test_shape_listing_and_apply(client):
    sid = make_session(client)
    for text in (
        "Place a red nut at the 2nd column, 2nd row.",
        "Put a red nut on top.",
        "This is what I call a Tower2",
    ):
        client.post(f"/sessions/{sid}/instruction", json={"text": text})
    shapes = client.get(f"/shapes?session_id={sid}").json()["shapes"]
    assert shapes == [{"name": "Tower2", "version": 1, "parts": 2}]
    res = client.post("/shapes/Tower2/apply",
                      json={"session_id": sid, "x": 9, "y": 9, "color": "green"})
    assert res.json()["kind"] == "execute"
    state = client.get(f"/sessions/{sid}/state").json()
    greens = [p for p in state["grid"] if p["color"] == "green"]
    assert {(p["x"], p["y"], p["z"]) for p in greens} == {(9, 9, 1), (9, 9, 2)}


def test_log_persistence_and_replay(service, client):
    sid = make_session(client)
    script = [
        "Place a blue screw at the 5th column, 4th row.",
        "Place a nut at the 2nd column, 2nd row.",
        "green",
        "This is what I call a Duo",
        "Make me another Duo at the 9th column, 9th row.",
    ]
    for text in script:
        endpoint = "answer" if text == "green" else "instruction"
        client.post(f"/sessions/{sid}/{endpoint}", json={"text": text})
    state = client.get(f"/sessions/{sid}/state").json()

    record = service.get(sid)
    assert read_architect_turns(record.log_path) == script
    replayed = service.replay_log(record.log_path)
    assert replayed["grid"] == state["grid"]


def test_replay_empty_log_empty_grid(service, tmp_path):
    log = tmp_path / "empty.jsonl"
    log.write_text("")
    assert service.replay_log(log)["grid"] == []


def test_replay_corrupt_log_names_line(service, tmp_path):
    log = tmp_path / "bad.jsonl"
    log.write_text('{"role":"architect","text":"Place a blue screw at the 5th column, 4th row."}\n{broken\n')
    with pytest.raises(CorruptLog) as err:
        service.replay_log(log)
    assert err.value.line_no == 2


def test_crash_recovery_rebuilds_sessions(service, client, tmp_path):
    sid = make_session(client)
    client.post(f"/sessions/{sid}/instruction",
                json={"text": "Place a blue screw at the 5th column, 4th row."})
    snapshot = client.get(f"/sessions/{sid}/state").json()["grid"]

    fresh = SessionService(ServiceConfig(data_dir=service.config.data_dir))
    assert fresh.recover_sessions() == 1
    assert fresh.get(sid).ctx.grid.snapshot() == snapshot


def test_service_config_from_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps(
            {
                "data_dir": str(tmp_path / "d"),
                "backend": {"kind": "remote", "endpoint": "http://example.test", "model": "m"},
            }
        )
    )
    config = ServiceConfig.from_file(path)
    assert config.backend.kind == "remote"
    assert config.backend.endpoint == "http://example.test"
    assert config.data_dir == tmp_path / "d"


def test_concurrent_sessions_are_isolated(client):
    import threading

    ids = [make_session(client) for _ in range(6)]
    errors = []

    def drive(i, sid):
        try:
            for step in range(4):
                x = 2 + i
                res = client.post(
                    f"/sessions/{sid}/instruction",
                    json={"text": f"Place a red nut at the {x}th column, {x}th row."},
                )
                assert res.json()["kind"] == "execute", res.text
        except Exception as err:
            errors.append((i, err))

    threads = [threading.Thread(target=drive, args=(i, sid)) for i, sid in enumerate(ids)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    for i, sid in enumerate(ids):
        grid = client.get(f"/sessions/{sid}/state").json()["grid"]
        assert len(grid) == 4
        assert {(p["x"], p["y"]) for p in grid} == {(2 + i, 2 + i)}
        assert [p["z"] for p in grid] == [1, 2, 3, 4]


def test_shared_shape_library_config(tmp_path, client, service):
    # build a library file via one service, mount it in another
    sid = make_session(client)
    for text in (
        "Place a red nut at the 2nd column, 2nd row.",
        "This is what I call a Dot",
    ):
        client.post(f"/sessions/{sid}/instruction", json={"text": text})
    lib_path = tmp_path / "lib.json"
    service.get(sid).ctx.memory.save(lib_path)

    shared = SessionService(
        ServiceConfig(data_dir=tmp_path / "data2", shape_library=str(lib_path))
    )
    app = TestClient(create_app(service=shared))
    assert app.get("/shapes").json()["shapes"][0]["name"] == "Dot"
    sid2 = app.post("/sessions", json={}).json()["session_id"]
    out = app.post(f"/sessions/{sid2}/instruction",
                   json={"text": "Make me another Dot at the 5th column, 5th row."})
    assert out.json()["kind"] == "execute"

    with pytest.raises(BadConfig):
        SessionService(ServiceConfig(data_dir=tmp_path / "data3", shape_library="/missing.json"))
