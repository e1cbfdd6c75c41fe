"""HTTP/SSE transport tests, driven through the in-process test client.
All sessions use rate = 0 so the wall-clock ticker never interferes."""

import json

import pytest
from fastapi.testclient import TestClient

from mzsim.scenarios import builtin_scenario, scenario_to_json
from mzsim.server import create_app


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


def _create(client, **over):
    body = {"scenario": "ce", "theory": "ct", "mode": "collapse", "seed": 11, "rate": 0}
    body.update(over)
    r = client.post("/session", json=body)
    assert r.status_code == 200, r.text
    return r.json()


def _cmd(client, sid, token, **cmd):
    r = client.post(f"/session/{sid}/cmd", json={"token": token, **cmd})
    assert r.status_code == 200, r.text
    return r.json()


def test_create_session(client):
    body = _create(client)
    assert body["v"] == 1
    assert body["id"] and body["writer_token"]
    state = body["state"]
    assert state["v"] == 1 and state["type"] == "state"
    assert state["phase"] == "idle"
    assert state["scenario"] == "ce"


def test_create_with_inline_scenario(client):
    inline = scenario_to_json(builtin_scenario("me"))
    body = _create(client, scenario=inline)
    assert body["state"]["scenario"] == "me"


def test_create_rejects_bad_config(client):
    assert client.post("/session", json={"scenario": "nope"}).status_code == 422
    assert (
        client.post("/session", json={"scenario": "be", "theory": "xx"}).status_code
        == 422
    )
    assert (
        client.post("/session", json={"scenario": "be", "mode": "maybe"}).status_code
        == 422
    )


def test_commands_need_writer_token(client):
    body = _create(client)
    sid = body["id"]
    r = client.post(f"/session/{sid}/cmd", json={"token": "nope", "type": "start_run"})
    assert r.status_code == 403
    # reads are open
    assert client.get(f"/session/{sid}/state").status_code == 200


def test_missing_session_is_404(client):
    assert client.get("/session/zzz/state").status_code == 404
    assert client.get("/session/zzz/log").status_code == 404
    r = client.post("/session/zzz/cmd", json={"token": "x", "type": "pause"})
    assert r.status_code == 404


def test_run_and_step_over_http(client):
    body = _create(client)
    sid, tok = body["id"], body["writer_token"]
    res = _cmd(client, sid, tok, type="start_run")
    assert res["ok"] and res["run_index"] == 0
    res = _cmd(client, sid, tok, type="step", dt=1000.0)
    assert res["ok"]
    state = client.get(f"/session/{sid}/state").json()
    assert state["clock"] == 1000.0
    assert state["phase"] == "running"
    assert state["packets"]
    # a rejected command reports its reason but stays HTTP 200
    res = _cmd(client, sid, tok, type="resume")
    assert not res["ok"] and "cannot resume" in res["error"]


def test_detection_updates_scoreboard(client):
    body = _create(client)
    sid, tok = body["id"], body["writer_token"]
    _cmd(client, sid, tok, type="start_run")
    _cmd(client, sid, tok, type="step", dt=9000.0)
    state = client.get(f"/session/{sid}/state").json()
    # the post-command broadcast already resolved the detected phase
    assert state["phase"] == "idle"
    assert sum(e["count"] for e in state["scoreboard"]) == 1


def test_event_stream_starts_with_snapshot(client):
    body = _create(client)
    sid, tok = body["id"], body["writer_token"]
    _cmd(client, sid, tok, type="start_run")
    _cmd(client, sid, tok, type="step", dt=1000.0)
    with client.stream(
        "GET", f"/session/{sid}/events", params={"limit": 1}
    ) as resp:
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("text/event-stream")
        lines = list(resp.iter_lines())
    datas = [l for l in lines if l.startswith("data: ")]
    assert len(datas) == 1
    snap = json.loads(datas[0][len("data: ") :])
    assert snap["v"] == 1 and snap["type"] == "state"
    assert snap["clock"] == 1000.0


def test_log_endpoint_is_replayable(client):
    body = _create(client)
    sid, tok = body["id"], body["writer_token"]
    _cmd(client, sid, tok, type="start_run")
    _cmd(client, sid, tok, type="step", dt=9000.0)
    log = client.get(f"/session/{sid}/log").json()
    assert log["v"] == 1
    assert log["scenario"] == "ce" and log["seed"] == 11
    assert [e["type"] for e in log["log"]] == ["start_run", "step"]

    from mzsim.service import replay_log

    replayed = replay_log(
        log["scenario"], log["theory"], log["mode"], log["seed"], log["log"],
        cadence=log["cadence"],
    )
    state = client.get(f"/session/{sid}/state").json()
    board = {
        (e["source"], e["detector"]): e["count"] for e in state["scoreboard"]
    }
    assert replayed.scoreboard == board
