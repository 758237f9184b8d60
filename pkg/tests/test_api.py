"""HTTP endpoints and the server-sent event stream."""

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from cprflow import records
from cprflow.api import create_app
from cprflow.clock import RealTimeSource, VirtualTimeSource
from cprflow.service import SessionService


@pytest.fixture
def client(tmp_path):
    service = SessionService(time_source=VirtualTimeSource(), data_dir=tmp_path / "data")
    with TestClient(create_app(service)) as c:
        c.service = service
        yield c
    service.close()


def make_session(client, config=None) -> str:
    body = {"config": config} if config else {}
    r = client.post("/sessions", json=body)
    assert r.status_code == 201
    return r.json()["session_id"]


def submit(client, sid, kind, payload=None):
    return client.post(f"/sessions/{sid}/commands", json={"kind": kind, "payload": payload or {}})


def sse_events(body: str):
    """Parse data frames out of an SSE body."""
    frames = []
    for block in body.split("\n\n"):
        data_lines = [l[6:] for l in block.splitlines() if l.startswith("data: ")]
        event_type = next((l[7:] for l in block.splitlines() if l.startswith("event: ")), None)
        if data_lines:
            frames.append((event_type, json.loads("\n".join(data_lines))))
    return frames


def test_healthz(client):
    assert client.get("/healthz").json() == {"status": "ok"}


def test_create_session_returns_id(client):
    sid = make_session(client)
    assert sid
    snap = client.get(f"/sessions/{sid}/snapshot").json()
    assert snap["phase"] == "analysis"


def test_create_with_bad_config_lists_fields(client):
    r = client.post("/sessions", json={"config": {"adrenaline_interval": 0}})
    assert r.status_code == 422
    assert r.json()["detail"]["fields"] == ["adrenaline_interval"]


def test_submit_accepted_and_rejected(client):
    sid = make_session(client)
    ok = submit(client, sid, "AnalyzeRhythm")
    assert ok.status_code == 200
    body = ok.json()
    assert body["accepted"] is True
    assert body["events"][0]["kind"] == "RhythmSelectionOpened"
    assert "SelectAsystolePea" in body["enabled_commands"]

    rejected = submit(client, sid, "Defibrillate").json()
    assert rejected["accepted"] is False
    assert rejected["reason"] == "not-enabled"


def test_submit_unknown_session_404(client):
    assert submit(client, "nope", "Tick").status_code == 404
    assert client.get("/sessions/nope/snapshot").status_code == 404
    assert client.get("/sessions/nope/export").status_code == 404
    assert client.get("/sessions/nope/events").status_code == 404


def test_submit_unknown_kind_422(client):
    sid = make_session(client)
    assert submit(client, sid, "Reboot").status_code == 422


def test_snapshot_field_names(client):
    sid = make_session(client)
    snap = client.get(f"/sessions/{sid}/snapshot").json()
    for key in (
        "session_id",
        "phase",
        "defib_count",
        "adrenaline_total_mg",
        "cordarone_total_mg",
        "enabled_commands",
        "countdown_remaining_ns",
        "elapsed_ns",
        "ended",
        "last_seq",
    ):
        assert key in snap


def test_wire_event_field_names(client):
    sid = make_session(client)
    note = submit(client, sid, "AddNote", {"text": "wire check"}).json()
    event = note["events"][0]
    assert set(event) == {"seq", "monotonic_ns", "wall_utc", "kind", "payload"}
    assert event["payload"]["text"] == "wire check"


def test_export_parses_and_matches_server_log(client):
    sid = make_session(client)
    submit(client, sid, "AnalyzeRhythm")
    submit(client, sid, "EndSession")
    r = client.get(f"/sessions/{sid}/export")
    assert r.status_code == 200
    assert "attachment" in r.headers["content-disposition"]
    log = records.parse_session(r.content)
    assert log == client.service.event_log(sid)
    records.replay_verify(log)


def test_stream_finished_session_history_then_end(client):
    sid = make_session(client)
    submit(client, sid, "AnalyzeRhythm")
    submit(client, sid, "EndSession")
    with client.stream("GET", f"/sessions/{sid}/events") as r:
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("text/event-stream")
        body = "".join(r.iter_text())
    frames = sse_events(body)
    kinds = [f[1].get("kind") for f in frames if f[0] is None]
    assert kinds == ["SessionStarted", "AnalysisOpened", "RhythmSelectionOpened", "SessionEnded"]
    assert frames[-1][0] == "end"


def test_stream_resume_from_seq_is_gapless(client):
    sid = make_session(client)
    submit(client, sid, "AnalyzeRhythm")
    submit(client, sid, "SelectVfVt")
    submit(client, sid, "Defibrillate")
    submit(client, sid, "ReturnToAnalysis")
    submit(client, sid, "AnalyzeRhythm")
    submit(client, sid, "EndSession")

    with client.stream("GET", f"/sessions/{sid}/events?from_seq=1") as r:
        first_body = "".join(r.iter_text())
    all_frames = [f for f in sse_events(first_body) if f[0] is None]
    cut = 4
    resume_from = all_frames[cut - 1][1]["seq"] + 1

    with client.stream("GET", f"/sessions/{sid}/events?from_seq={resume_from}") as r:
        resumed_body = "".join(r.iter_text())
    resumed = [f for f in sse_events(resumed_body) if f[0] is None]
    seqs = [f[1]["seq"] for f in all_frames[:cut]] + [f[1]["seq"] for f in resumed]
    assert seqs == list(range(1, len(all_frames) + 1))


def test_stream_resume_via_last_event_id_header(client):
    sid = make_session(client)
    submit(client, sid, "AnalyzeRhythm")
    submit(client, sid, "EndSession")
    with client.stream(
        "GET", f"/sessions/{sid}/events", headers={"Last-Event-ID": "2"}
    ) as r:
        body = "".join(r.iter_text())
    frames = [f for f in sse_events(body) if f[0] is None]
    assert [f[1]["seq"] for f in frames] == [3, 4]


def test_live_stream_delivers_events_as_they_happen(tmp_path):
    service = SessionService(time_source=RealTimeSource(), data_dir=None)
    app = create_app(service)
    with TestClient(app) as client:
        r = client.post("/sessions", json={})
        sid = r.json()["session_id"]

        def driver():
            time.sleep(0.3)
            client.post(f"/sessions/{sid}/commands", json={"kind": "AnalyzeRhythm"})
            time.sleep(0.1)
            client.post(f"/sessions/{sid}/commands", json={"kind": "EndSession"})

        t = threading.Thread(target=driver)
        t.start()
        with client.stream("GET", f"/sessions/{sid}/events") as resp:
            body = "".join(resp.iter_text())
        t.join()
    service.close()
    frames = [f for f in sse_events(body) if f[0] is None]
    kinds = [f[1]["kind"] for f in frames]
    assert kinds == ["SessionStarted", "AnalysisOpened", "RhythmSelectionOpened", "SessionEnded"]
