import json

import pytest
from fastapi.testclient import TestClient

from bmst.analytics import sample_record_from_session
from bmst.corpus import make_toy_corpus
from bmst.score import write_score_text
from bmst.service import (
    AssignmentPlan,
    ClipInfo,
    ServiceError,
    SessionStore,
    build_assignment,
    create_app,
    dump_session_log,
    load_session_log,
    recount_metrics,
    write_export,
)


class FakeClock:
    def __init__(self, t=1_000_000.0):
        self.t = t

    def __call__(self):
        return self.t

    def advance(self, seconds):
        self.t += seconds


def demo_clips(n_pieces=2):
    pieces = make_toy_corpus(n_pieces)
    clips = {}
    for i, piece in enumerate(pieces):
        for system in ("candidate", "reference"):
            cid = f"clip-{i}{system[0]}"
            clips[cid] = ClipInfo(cid, piece.piece_id, "bach", system, write_score_text(piece.score))
    return clips


@pytest.fixture
def store(tmp_path):
    return SessionStore(tmp_path, demo_clips(), clock=FakeClock())


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


def key_event(ts, n=1):
    return [{"timestamp_ms": ts + i, "kind": "key_press"} for i in range(n)]


def click_event(ts, n=1):
    return [{"timestamp_ms": ts + i, "kind": "mouse_click"} for i in range(n)]


# --- assignment --------------------------------------------------------------------


def make_clipset():
    clips = []
    for piece in range(6):
        for style in ("bach", "jazz"):
            for system in ("candidate", "reference"):
                clips.append(
                    ClipInfo(f"clip-{piece}-{style}-{system[0]}", f"p{piece}", style, system, "")
                )
    return clips


def test_assignment_counts():
    editors = [f"e{i}" for i in range(12)]
    clips = make_clipset()
    plan = build_assignment(editors, clips, seed=1)
    assert sum(len(v) for v in plan.assignments.values()) == 72
    assert all(len(v) == 6 for v in plan.assignments.values())
    counts = plan.clip_counts()
    assert all(counts[c.clip_id] == 3 for c in clips)


def test_assignment_no_editor_sees_both_systems():
    editors = [f"e{i}" for i in range(12)]
    clips = make_clipset()
    by_id = {c.clip_id: c for c in clips}
    plan = build_assignment(editors, clips, seed=2)
    assert plan.relaxed == []
    for editor, clip_ids in plan.assignments.items():
        pairs = [(by_id[c].piece_id, by_id[c].style) for c in clip_ids]
        assert len(pairs) == len(set(pairs)), f"{editor} got both systems of a pair"
        assert len(set(clip_ids)) == len(clip_ids)


def test_assignment_deterministic():
    editors = [f"e{i}" for i in range(12)]
    clips = make_clipset()
    assert build_assignment(editors, clips, seed=5) == build_assignment(editors, clips, seed=5)


def test_assignment_count_mismatch_rejected():
    with pytest.raises(ServiceError):
        build_assignment(["e0"], make_clipset(), seed=0)


# --- protocol over HTTP --------------------------------------------------------------


def start(client, editor="ed1", clip="clip-0c"):
    response = client.post("/sessions", json={"editor_id": editor, "clip_id": clip})
    assert response.status_code == 201, response.text
    return response.json()


def test_session_lifecycle_and_tallies(client, store):
    doc = start(client)
    sid = doc["session_id"]
    assert doc["deadline_ms"] - doc["started_at_ms"] == 1800_000
    assert "ticks_per_beat=8" in doc["score"]
    assert doc["preview"]["type"] == "tone-grid"

    r = client.post(f"/sessions/{sid}/events", json={"events": key_event(100, 10)})
    assert r.status_code == 200
    r = client.post(f"/sessions/{sid}/events", json={"events": click_event(200, 5)})
    assert r.json()["key_presses"] == 10 and r.json()["mouse_clicks"] == 5

    store.clock.advance(120.0)
    r = client.post(
        f"/sessions/{sid}/submit",
        json={"edited_score": store.clips["clip-0c"].score_text, "eq1": 4, "eq2": 3, "eq3": 5},
    )
    assert r.status_code == 200
    metrics = r.json()["metrics"]
    assert metrics == {"editing_time_seconds": 120.0, "key_presses": 10, "mouse_clicks": 5}


def test_duplicate_submit_is_idempotent(client, store):
    doc = start(client)
    sid = doc["session_id"]
    payload = {"edited_score": store.clips["clip-0c"].score_text, "eq1": 3, "eq2": 3, "eq3": 3}
    store.clock.advance(10.0)
    first = client.post(f"/sessions/{sid}/submit", json=payload).json()
    store.clock.advance(400.0)
    second = client.post(f"/sessions/{sid}/submit", json=payload).json()
    assert first == second


def test_append_after_deadline_rejected_and_expires(client, store):
    doc = start(client)
    sid = doc["session_id"]
    client.post(f"/sessions/{sid}/events", json={"events": key_event(5, 3)})
    store.clock.advance(1801.0)
    r = client.post(f"/sessions/{sid}/events", json={"events": key_event(999)})
    assert r.status_code == 409
    assert r.json()["detail"]["state"] == "expired"
    # auto-finalization kept the logged tallies and the capped time
    export = client.get("/export").json()["sessions"]
    record = next(s for s in export if s["session_id"] == sid)
    assert record["state"] == "expired"
    assert record["metrics"]["key_presses"] == 3
    assert record["metrics"]["editing_time_seconds"] == 1800


def test_submit_after_deadline_rejected(client, store):
    doc = start(client)
    sid = doc["session_id"]
    store.clock.advance(1800.5)
    r = client.post(
        f"/sessions/{sid}/submit",
        json={"edited_score": store.clips["clip-0c"].score_text, "eq1": 3, "eq2": 3, "eq3": 3},
    )
    assert r.status_code == 409
    assert r.json()["detail"]["state"] == "expired"


def test_one_active_session_per_editor(client, store):
    start(client, editor="ed1", clip="clip-0c")
    r = client.post("/sessions", json={"editor_id": "ed1", "clip_id": "clip-0r"})
    assert r.status_code == 409
    r = client.post("/sessions", json={"editor_id": "ed2", "clip_id": "clip-0r"})
    assert r.status_code == 201


def test_event_timestamps_must_be_nondecreasing(client, store):
    sid = start(client)["session_id"]
    r = client.post(
        f"/sessions/{sid}/events",
        json={"events": [{"timestamp_ms": 50, "kind": "key_press"},
                         {"timestamp_ms": 10, "kind": "key_press"}]},
    )
    assert r.status_code == 422


def test_note_op_bounds_checked(client, store):
    sid = start(client)["session_id"]
    bad = {
        "timestamp_ms": 10,
        "kind": "note_op",
        "payload": {"op": "insert", "after": {"pitch_index": 90, "onset_tick": 0, "duration_ticks": 2}},
    }
    r = client.post(f"/sessions/{sid}/events", json={"events": [bad]})
    assert r.status_code == 422
    good = {
        "timestamp_ms": 10,
        "kind": "note_op",
        "payload": {"op": "insert", "after": {"pitch_index": 40, "onset_tick": 0, "duration_ticks": 2}},
    }
    r = client.post(f"/sessions/{sid}/events", json={"events": [good]})
    assert r.status_code == 200
    # note ops count as neither key presses nor clicks
    assert r.json()["key_presses"] == 0 and r.json()["mouse_clicks"] == 0


def test_note_op_accepts_multi_note_sides(client, store):
    # a split carries one note before, two after (the editor's event schema)
    sid = start(client)["session_id"]
    split = {
        "timestamp_ms": 5,
        "kind": "note_op",
        "payload": {
            "op": "split",
            "before": [{"pitch_index": 39, "onset_tick": 0, "duration_ticks": 8}],
            "after": [
                {"pitch_index": 39, "onset_tick": 0, "duration_ticks": 4},
                {"pitch_index": 39, "onset_tick": 4, "duration_ticks": 4},
            ],
        },
    }
    assert client.post(f"/sessions/{sid}/events", json={"events": [split]}).status_code == 200
    bad = dict(split)
    bad["payload"] = {
        "op": "split",
        "before": [{"pitch_index": 39, "onset_tick": 0, "duration_ticks": 8}],
        "after": [{"pitch_index": 99, "onset_tick": 0, "duration_ticks": 4}],
    }
    bad["timestamp_ms"] = 6
    assert client.post(f"/sessions/{sid}/events", json={"events": [bad]}).status_code == 422


def test_batch_idempotence(client, store):
    sid = start(client)["session_id"]
    batch = {"batch_id": "b1", "events": key_event(10, 4)}
    r1 = client.post(f"/sessions/{sid}/events", json=batch)
    r2 = client.post(f"/sessions/{sid}/events", json=batch)
    assert r1.json()["key_presses"] == 4
    assert r2.json()["duplicate_batch"] is True
    assert r2.json()["key_presses"] == 4


def test_unknown_session_404(client):
    assert client.post("/sessions/nope/events", json={"events": []}).status_code == 404


def test_log_round_trip_byte_identical(client, store, tmp_path):
    sid = start(client)["session_id"]
    client.post(f"/sessions/{sid}/events", json={"events": key_event(10, 3) + click_event(20, 2)})
    store.clock.advance(30.0)
    client.post(
        f"/sessions/{sid}/submit",
        json={"edited_score": store.clips["clip-0c"].score_text, "eq1": 5, "eq2": 4, "eq3": 3},
    )
    path = store.root / f"{sid}.jsonl"
    original = path.read_text(encoding="utf-8")
    assert dump_session_log(load_session_log(path)) == original


def test_metrics_match_independent_recount(client, store):
    sid = start(client)["session_id"]
    client.post(f"/sessions/{sid}/events", json={"events": key_event(10, 7) + click_event(100, 4)})
    store.clock.advance(55.0)
    r = client.post(
        f"/sessions/{sid}/submit",
        json={"edited_score": store.clips["clip-0c"].score_text, "eq1": 3, "eq2": 3, "eq3": 3},
    )
    keys, clicks = recount_metrics(load_session_log(store.root / f"{sid}.jsonl"))
    assert (keys, clicks) == (7, 4)
    assert r.json()["metrics"]["key_presses"] == keys
    assert r.json()["metrics"]["mouse_clicks"] == clicks


def test_export_reveals_system_and_feeds_analytics(client, store, tmp_path):
    sid = start(client, clip="clip-0c")["session_id"]
    client.post(f"/sessions/{sid}/events", json={"events": key_event(10, 2)})
    store.clock.advance(45.0)
    client.post(
        f"/sessions/{sid}/submit",
        json={"edited_score": store.clips["clip-0c"].score_text, "eq1": 4, "eq2": 4, "eq3": 4},
    )
    docs = client.get("/export").json()["sessions"]
    assert docs[0]["clip"]["system"] == "candidate"

    out = tmp_path / "export"
    write_export(docs, out)
    files = sorted(out.glob("*.json"))
    assert len(files) == 1
    record = sample_record_from_session(json.loads(files[0].read_text()))
    assert record is not None
    assert record.metrics.key_presses == 2
    assert record.eq == (4, 4, 4)


def test_plan_driven_clip_assignment(tmp_path):
    clips = demo_clips()
    plan = AssignmentPlan(assignments={"ed1": ["clip-0c", "clip-1r"]})
    store = SessionStore(tmp_path, clips, clock=FakeClock(), plan=plan)
    app = TestClient(create_app(store))
    doc = app.post("/sessions", json={"editor_id": "ed1"}).json()
    assert doc["clip_id"] == "clip-0c"
    sid = doc["session_id"]
    app.post(
        f"/sessions/{sid}/submit",
        json={"edited_score": clips["clip-0c"].score_text, "eq1": 3, "eq2": 3, "eq3": 3},
    )
    doc2 = app.post("/sessions", json={"editor_id": "ed1"}).json()
    assert doc2["clip_id"] == "clip-1r"
