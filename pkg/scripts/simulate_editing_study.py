#!/usr/bin/env python3
"""Simulate a full editing study end to end through the session service.

12 scripted editors each edit 6 of 24 blinded clips (each clip edited three
times); their synthetic effort depends on a hidden per-clip quality, so the
analytics tables should recover the planted quality/effort relationship.
Listener ratings for the same clips are generated alongside.

Usage: python scripts/simulate_editing_study.py --out study_out
"""

import argparse
import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from bmst.analytics import (
    comparison_sets,
    format_ratio_table,
    ratio_table_json,
    read_listener_ratings,
    sample_record_from_session,
)
from bmst.corpus import make_toy_corpus
from bmst.score import write_score_text
from bmst.service import ClipInfo, SessionStore, build_assignment, create_app, write_export


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)

    pieces = make_toy_corpus(6, measures=1)
    clips: dict[str, ClipInfo] = {}
    quality: dict[str, float] = {}
    for piece in pieces:
        for style in ("bach", "jazz"):
            for system in ("candidate", "reference"):
                label = f"clip-{rng.integers(16**8):08x}"
                clips[label] = ClipInfo(
                    label, piece.piece_id, style, system, write_score_text(piece.score)
                )
                quality[label] = float(rng.uniform(0, 1) + (0.3 if system == "candidate" else 0))

    editors = [f"editor-{i:02d}" for i in range(12)]
    plan = build_assignment(editors, list(clips.values()), seed=args.seed)
    print(f"assignment: {sum(len(v) for v in plan.assignments.values())} sessions, "
          f"{len(plan.relaxed)} relaxed conflicts")

    clock = [1_700_000_000.0]
    store = SessionStore(args.out / "logs", clips, clock=lambda: clock[0], plan=plan)
    client = TestClient(create_app(store))

    for editor in editors:
        for _ in range(6):
            doc = client.post("/sessions", json={"editor_id": editor}).json()
            sid, label = doc["session_id"], doc["clip_id"]
            q = quality[label]
            keys = int(np.clip(400 - 250 * q + rng.normal(0, 30), 1, 1000))
            clicks = int(np.clip(200 - 120 * q + rng.normal(0, 20), 1, 500))
            events, ts = [], 0
            for k in range(keys):
                ts += int(rng.integers(1, 40))
                events.append({"timestamp_ms": ts, "kind": "key_press"})
            for c in range(clicks):
                ts += int(rng.integers(1, 40))
                events.append({"timestamp_ms": ts, "kind": "mouse_click"})
            for start in range(0, len(events), 50):
                client.post(
                    f"/sessions/{sid}/events",
                    json={"batch_id": f"{sid}-{start}", "events": events[start : start + 50]},
                )
            clock[0] += float(np.clip(1500 - 1000 * q + rng.normal(0, 60), 10, 1790))
            eq = [int(np.clip(round(1 + 3.5 * q + rng.normal(0, 0.4)), 1, 5)) for _ in range(3)]
            client.post(
                f"/sessions/{sid}/submit",
                json={"edited_score": clips[label].score_text,
                      "eq1": eq[0], "eq2": eq[1], "eq3": eq[2]},
            )
            clock[0] += 60.0

    docs = client.get("/export").json()["sessions"]
    export_dir = args.out / "sessions"
    write_export(docs, export_dir)
    print(f"wrote {len(docs)} session documents to {export_dir}")

    rows = ["piece_id,style,system,rater_id,lq1"]
    for clip in clips.values():
        for listener in range(4):
            lq = int(np.clip(round(1 + 3.5 * quality[clip.clip_id] + rng.normal(0, 0.5)), 1, 5))
            rows.append(f"{clip.piece_id},{clip.style},{clip.system},listener-{listener},{lq}")
    listen_path = args.out / "listener_ratings.csv"
    listen_path.write_text("\n".join(rows) + "\n", encoding="utf-8")

    records = [r for r in map(sample_record_from_session, docs) if r is not None]
    ratings = read_listener_ratings(listen_path.read_text(encoding="utf-8"))
    tables_dir = args.out / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)
    styles = ("bach", "jazz")
    (tables_dir / "table3.txt").write_text(format_ratio_table(records, styles) + "\n")
    (tables_dir / "table3.json").write_text(ratio_table_json(records, styles) + "\n")
    sets = comparison_sets(records, ratings)
    (tables_dir / "table4.txt").write_text(sets.formatted() + "\n")
    (tables_dir / "table4.json").write_text(sets.to_json() + "\n")

    print()
    print(format_ratio_table(records, styles))
    print()
    print(sets.formatted())


if __name__ == "__main__":
    main()
