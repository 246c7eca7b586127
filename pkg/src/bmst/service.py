"""Editing-test session service.

Serves blinded clips to editors, enforces the 30-minute session deadline,
captures the editing event stream, and persists one append-only JSONL log
per session. Log lines are canonical JSON (sorted keys, no spaces), so a
parse/re-serialize round trip is byte-identical.

Log line kinds:
  created   {schema_version, kind, session_id, editor_id, clip_id,
             started_at_ms, deadline_ms}
  event     {schema_version, kind, timestamp_ms, event_kind, payload}
  submitted {schema_version, kind, submitted_at_ms, eq, edited_score, metrics}
  expired   {schema_version, kind, expired_at_ms, metrics}
"""

import json
import secrets
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .analytics import LoadingMetrics
from .score import N_PITCHES

SCHEMA_VERSION = 1
SESSION_SECONDS = 1800
EVENT_KINDS = ("key_press", "mouse_click", "note_op")
NOTE_OPS = ("move", "split", "resize", "delete", "insert")


class ServiceError(RuntimeError):
    def __init__(self, message: str, status: int = 409, state: str | None = None):
        super().__init__(message)
        self.status = status
        self.state = state


@dataclass(frozen=True)
class ClipInfo:
    clip_id: str  # opaque blinded label
    piece_id: str
    style: str
    system: str  # candidate | reference
    score_text: str


def blinded_label(rng: np.random.Generator) -> str:
    return "clip-" + "".join(rng.choice(list("0123456789abcdef"), size=8))


@dataclass
class AssignmentPlan:
    assignments: dict[str, list[str]]
    relaxed: list[tuple[str, str, str]] = field(default_factory=list)  # (editor, piece, style)

    def clip_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for clip_ids in self.assignments.values():
            for cid in clip_ids:
                counts[cid] = counts.get(cid, 0) + 1
        return counts


def build_assignment(
    editor_ids: list[str],
    clips: list[ClipInfo],
    seed: int = 0,
    per_editor: int = 6,
    copies: int = 3,
) -> AssignmentPlan:
    """Deterministic balanced assignment: each clip to `copies` distinct
    editors, each editor `per_editor` distinct clips, avoiding giving one
    editor both systems' versions of a piece/style where possible."""
    if len(editor_ids) * per_editor != len(clips) * copies:
        raise ServiceError(
            f"{len(editor_ids)} editors x {per_editor} != {len(clips)} clips x {copies}",
            status=422,
        )
    for attempt in range(300):
        rng = np.random.default_rng((seed, attempt))
        relax = attempt >= 150
        plan = _try_assignment(editor_ids, clips, rng, per_editor, copies, relax)
        if plan is not None:
            return plan
    raise ServiceError("could not build a balanced assignment", status=422)


def _try_assignment(
    editor_ids: list[str],
    clips: list[ClipInfo],
    rng: np.random.Generator,
    per_editor: int,
    copies: int,
    relax: bool,
) -> AssignmentPlan | None:
    pool = [clip for clip in clips for _ in range(copies)]
    rng.shuffle(pool)
    capacity = {e: per_editor for e in editor_ids}
    held_clips: dict[str, set[str]] = {e: set() for e in editor_ids}
    held_pairs: dict[str, set[tuple[str, str]]] = {e: set() for e in editor_ids}
    assignments: dict[str, list[str]] = {e: [] for e in editor_ids}
    relaxed: list[tuple[str, str, str]] = []

    for clip in pool:
        order = list(editor_ids)
        rng.shuffle(order)
        order.sort(key=lambda e: -capacity[e])  # fill the fullest-capacity editors first
        chosen = None
        fallback = None
        for editor in order:
            if capacity[editor] == 0 or clip.clip_id in held_clips[editor]:
                continue
            if (clip.piece_id, clip.style) in held_pairs[editor]:
                fallback = fallback or editor
                continue
            chosen = editor
            break
        if chosen is None and relax and fallback is not None:
            chosen = fallback
            relaxed.append((chosen, clip.piece_id, clip.style))
        if chosen is None:
            return None
        capacity[chosen] -= 1
        held_clips[chosen].add(clip.clip_id)
        held_pairs[chosen].add((clip.piece_id, clip.style))
        assignments[chosen].append(clip.clip_id)
    return AssignmentPlan(assignments, relaxed)


# --- the session store ------------------------------------------------------------


def _canonical(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def load_session_log(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines()]


def dump_session_log(records: list[dict]) -> str:
    return "".join(_canonical(r) + "\n" for r in records)


@dataclass
class _SessionState:
    session_id: str
    editor_id: str
    clip_id: str
    started_at_ms: int
    deadline_ms: int
    state: str = "active"  # active | submitted | expired
    key_presses: int = 0
    mouse_clicks: int = 0
    last_timestamp_ms: int = 0
    seen_batches: set = field(default_factory=set)
    submit_response: dict | None = None


class SessionStore:
    """All protocol logic; the HTTP layer below is a thin adapter."""

    def __init__(
        self,
        root: str | Path,
        clips: dict[str, ClipInfo],
        clock: Callable[[], float] = time.time,
        plan: AssignmentPlan | None = None,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clips = clips
        self.clock = clock
        self.plan = plan
        self._sessions: dict[str, _SessionState] = {}
        self._by_editor: dict[str, str] = {}  # editor -> active session id

    # -- helpers

    def _now_ms(self) -> int:
        return int(self.clock() * 1000)

    def _log_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    def _append(self, session_id: str, record: dict) -> None:
        with self._log_path(session_id).open("a", encoding="utf-8") as fh:
            fh.write(_canonical(record) + "\n")
            fh.flush()

    def _clip_length(self, clip: ClipInfo) -> int:
        from .score import read_score_text

        return read_score_text(clip.score_text).length_ticks

    def _next_clip_for(self, editor_id: str) -> str:
        if self.plan is None:
            raise ServiceError("no assignment plan and no clip_id given", status=422)
        assigned = self.plan.assignments.get(editor_id)
        if not assigned:
            raise ServiceError(f"editor {editor_id!r} has no assigned clips", status=404)
        done = {
            s.clip_id
            for s in self._sessions.values()
            if s.editor_id == editor_id and s.state in ("submitted", "expired")
        }
        for clip_id in assigned:
            if clip_id not in done:
                return clip_id
        raise ServiceError(f"editor {editor_id!r} finished all assigned clips", status=404)

    def _expire(self, session: _SessionState) -> None:
        session.state = "expired"
        metrics = self._metrics(session, SESSION_SECONDS)
        self._append(
            session.session_id,
            {
                "schema_version": SCHEMA_VERSION,
                "kind": "expired",
                "expired_at_ms": session.started_at_ms + SESSION_SECONDS * 1000,
                "metrics": metrics,
            },
        )
        self._by_editor.pop(session.editor_id, None)

    @staticmethod
    def _metrics(session: _SessionState, seconds: float) -> dict:
        return {
            "editing_time_seconds": seconds,
            "key_presses": session.key_presses,
            "mouse_clicks": session.mouse_clicks,
        }

    def _check_deadline(self, session: _SessionState) -> None:
        if session.state == "active" and self._now_ms() > session.deadline_ms:
            self._expire(session)

    def _get(self, session_id: str) -> _SessionState:
        session = self._sessions.get(session_id)
        if session is None:
            raise ServiceError(f"unknown session {session_id!r}", status=404)
        return session

    # -- operations

    def start_session(self, editor_id: str, clip_id: str | None = None) -> dict:
        active = self._by_editor.get(editor_id)
        if active:
            self._check_deadline(self._sessions[active])
        if self._by_editor.get(editor_id):
            raise ServiceError(
                f"editor {editor_id!r} already has an active session", status=409, state="active"
            )
        if clip_id is None:
            clip_id = self._next_clip_for(editor_id)
        clip = self.clips.get(clip_id)
        if clip is None:
            raise ServiceError(f"unknown clip {clip_id!r}", status=404)

        session_id = f"sess-{len(self._sessions):04d}-{secrets.token_hex(4)}"
        started = self._now_ms()
        session = _SessionState(
            session_id=session_id,
            editor_id=editor_id,
            clip_id=clip_id,
            started_at_ms=started,
            deadline_ms=started + SESSION_SECONDS * 1000,
        )
        self._sessions[session_id] = session
        self._by_editor[editor_id] = session_id
        self._append(
            session_id,
            {
                "schema_version": SCHEMA_VERSION,
                "kind": "created",
                "session_id": session_id,
                "editor_id": editor_id,
                "clip_id": clip_id,
                "started_at_ms": started,
                "deadline_ms": session.deadline_ms,
            },
        )
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": session_id,
            "clip_id": clip_id,
            "started_at_ms": started,
            "deadline_ms": session.deadline_ms,
            "score": clip.score_text,
            "preview": {
                "type": "tone-grid",
                "ticks_per_beat": 8,
                "seconds_per_tick": 0.0625,
                "lowest_midi_note": 21,
            },
        }

    def append_events(self, session_id: str, events: list[dict], batch_id: str | None = None) -> dict:
        session = self._get(session_id)
        self._check_deadline(session)
        if session.state != "active":
            raise ServiceError(
                f"session {session_id} is {session.state}", status=409, state=session.state
            )
        if batch_id is not None and batch_id in session.seen_batches:
            return self._event_ack(session, accepted=0, duplicate=True)

        clip = self.clips[session.clip_id]
        length = self._clip_length(clip)
        validated = []
        last = session.last_timestamp_ms
        for event in events:
            ts = int(event.get("timestamp_ms", -1))
            kind = event.get("kind")
            if kind not in EVENT_KINDS:
                raise ServiceError(f"unknown event kind {kind!r}", status=422)
            if ts < last:
                raise ServiceError(
                    f"timestamps must be non-decreasing ({ts} < {last})", status=422
                )
            payload = event.get("payload") or {}
            if kind == "note_op":
                self._validate_note_op(payload, length)
            validated.append((ts, kind, payload))
            last = ts

        for ts, kind, payload in validated:
            self._append(
                session_id,
                {
                    "schema_version": SCHEMA_VERSION,
                    "kind": "event",
                    "timestamp_ms": ts,
                    "event_kind": kind,
                    "payload": payload,
                },
            )
            if kind == "key_press":
                session.key_presses += 1
            elif kind == "mouse_click":
                session.mouse_clicks += 1
            session.last_timestamp_ms = ts
        if batch_id is not None:
            session.seen_batches.add(batch_id)
        return self._event_ack(session, accepted=len(validated), duplicate=False)

    @staticmethod
    def _event_ack(session: _SessionState, accepted: int, duplicate: bool) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "accepted": accepted,
            "duplicate_batch": duplicate,
            "key_presses": session.key_presses,
            "mouse_clicks": session.mouse_clicks,
        }

    @staticmethod
    def _validate_note_op(payload: dict, length_ticks: int) -> None:
        op = payload.get("op")
        if op not in NOTE_OPS:
            raise ServiceError(f"unknown note op {op!r}", status=422)
        for side in ("before", "after"):
            value = payload.get(side)
            if value is None:
                continue
            notes = value if isinstance(value, list) else [value]
            for note in notes:
                pitch = note.get("pitch_index", 0)
                onset = note.get("onset_tick", 0)
                duration = note.get("duration_ticks", 1)
                if not (0 <= pitch < N_PITCHES):
                    raise ServiceError(f"note_op pitch {pitch} out of range", status=422)
                if onset < 0 or duration < 1 or onset + duration > length_ticks:
                    raise ServiceError(
                        f"note_op cells outside the roll ({onset}+{duration} vs {length_ticks})",
                        status=422,
                    )

    def submit(self, session_id: str, edited_score: str, eq: tuple[int, int, int]) -> dict:
        session = self._get(session_id)
        if session.state == "submitted" and session.submit_response is not None:
            return session.submit_response  # idempotent replay
        self._check_deadline(session)
        if session.state != "active":
            raise ServiceError(
                f"session {session_id} is {session.state}", status=409, state=session.state
            )
        if len(eq) != 3 or any(v not in (1, 2, 3, 4, 5) for v in eq):
            raise ServiceError(f"EQ answers must be three Likert values, got {eq}", status=422)
        from .score import read_score_text

        read_score_text(edited_score)  # malformed scores are rejected before persisting

        now = self._now_ms()
        seconds = (now - session.started_at_ms) / 1000.0
        metrics = self._metrics(session, seconds)
        self._append(
            session_id,
            {
                "schema_version": SCHEMA_VERSION,
                "kind": "submitted",
                "submitted_at_ms": now,
                "eq": list(eq),
                "edited_score": edited_score,
                "metrics": metrics,
            },
        )
        session.state = "submitted"
        self._by_editor.pop(session.editor_id, None)
        session.submit_response = {
            "schema_version": SCHEMA_VERSION,
            "session_id": session_id,
            "state": "submitted",
            "metrics": metrics,
        }
        return session.submit_response

    def expire_overdue(self) -> None:
        for session in list(self._sessions.values()):
            self._check_deadline(session)

    def export_sessions(self) -> list[dict]:
        """One self-contained document per finished or active session,
        system identity revealed."""
        self.expire_overdue()
        documents = []
        for session_id in sorted(self._sessions):
            session = self._sessions[session_id]
            clip = self.clips[session.clip_id]
            records = load_session_log(self._log_path(session_id))
            events = [r for r in records if r["kind"] == "event"]
            submitted = next((r for r in records if r["kind"] == "submitted"), None)
            expired = next((r for r in records if r["kind"] == "expired"), None)
            final = submitted or expired
            documents.append(
                {
                    "schema_version": SCHEMA_VERSION,
                    "session_id": session_id,
                    "editor_id": session.editor_id,
                    "state": session.state,
                    "clip": {
                        "clip_id": clip.clip_id,
                        "piece_id": clip.piece_id,
                        "style": clip.style,
                        "system": clip.system,
                    },
                    "started_at_ms": session.started_at_ms,
                    "deadline_ms": session.deadline_ms,
                    "events": events,
                    "eq": (submitted or {}).get("eq"),
                    "edited_score": (submitted or {}).get("edited_score"),
                    "metrics": (final or {}).get("metrics"),
                }
            )
        return documents


def loading_metrics_from_doc(doc: dict) -> LoadingMetrics:
    m = doc["metrics"]
    return LoadingMetrics(m["editing_time_seconds"], m["key_presses"], m["mouse_clicks"])


def write_export(documents: list[dict], directory: str | Path) -> list[Path]:
    """One canonical-JSON file per session document (analytics input layout)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for doc in documents:
        path = directory / f"{doc['session_id']}.json"
        path.write_text(_canonical(doc) + "\n", encoding="utf-8")
        paths.append(path)
    return paths


def recount_metrics(records: list[dict]) -> tuple[int, int]:
    """Independent tally of key/mouse events from a raw session log."""
    keys = sum(1 for r in records if r["kind"] == "event" and r["event_kind"] == "key_press")
    clicks = sum(1 for r in records if r["kind"] == "event" and r["event_kind"] == "mouse_click")
    return keys, clicks


# --- HTTP layer --------------------------------------------------------------------


def create_app(store: SessionStore):
    from fastapi import FastAPI, HTTPException
    from pydantic import BaseModel

    class CreateSessionRequest(BaseModel):
        editor_id: str
        clip_id: str | None = None

    class EventBatch(BaseModel):
        batch_id: str | None = None
        events: list[dict]

    class SubmitRequest(BaseModel):
        edited_score: str
        eq1: int
        eq2: int
        eq3: int

    app = FastAPI(title="editing-test session service")

    def run(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ServiceError as exc:
            detail = {"message": str(exc)}
            if exc.state:
                detail["state"] = exc.state
            raise HTTPException(status_code=exc.status, detail=detail) from exc

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        return run(store.start_session, request.editor_id, request.clip_id)

    @app.post("/sessions/{session_id}/events")
    def append_events(session_id: str, batch: EventBatch):
        return run(store.append_events, session_id, batch.events, batch.batch_id)

    @app.post("/sessions/{session_id}/submit")
    def submit(session_id: str, request: SubmitRequest):
        return run(
            store.submit, session_id, request.edited_score, (request.eq1, request.eq2, request.eq3)
        )

    @app.get("/export")
    def export():
        return {"schema_version": SCHEMA_VERSION, "sessions": store.export_sessions()}

    return app
