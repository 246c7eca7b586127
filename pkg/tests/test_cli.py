import json
from dataclasses import replace

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from bmst.cli import main
from bmst.corpus import make_toy_corpus
from bmst.model import TINY_CONFIG, write_config
from bmst.score import write_score_text
from bmst.service import ClipInfo, SessionStore, create_app, write_export


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, runner):
    """toy corpus + short training run shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    run_dir = root / "run"
    result = runner.invoke(main, ["toy-corpus", "--out", str(corpus), "--measures", "1"])
    assert result.exit_code == 0, result.output

    config_path = root / "tiny.cfg"
    write_config(replace(TINY_CONFIG, cvar_channels=8, condition_dim=8), config_path)
    result = runner.invoke(
        main,
        [
            "train",
            "--corpus", str(corpus),
            "--config", str(config_path),
            "--steps", "30",
            "--seed", "1",
            "--out", str(run_dir),
            "--learning-rate", "2e-3",
            "--checkpoint-every", "15",
        ],
    )
    assert result.exit_code == 0, result.output
    return root, corpus, run_dir


def test_train_artifacts(workspace):
    _, _, run_dir = workspace
    assert (run_dir / "checkpoint_final.txt").exists()
    assert (run_dir / "model.cfg").exists()
    report = json.loads((run_dir / "train_report.json").read_text())
    assert len(report["steps"]) == 30


def test_eval_prints_percentage(workspace, runner, tmp_path):
    _, corpus, run_dir = workspace
    out = tmp_path / "report.json"
    result = runner.invoke(
        main,
        [
            "eval",
            "--checkpoint", str(run_dir / "checkpoint_final.txt"),
            "--corpus", str(corpus),
            "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "%" in result.output
    payload = json.loads(out.read_text())
    assert 0.0 <= payload["error_rate_percent"] <= 100.0


def test_transfer_writes_midi_and_text(workspace, runner, tmp_path):
    root, corpus, run_dir = workspace
    out = tmp_path / "result.mid"
    snapshots = tmp_path / "snaps"
    result = runner.invoke(
        main,
        [
            "transfer",
            "--checkpoint", str(run_dir / "checkpoint_final.txt"),
            "--input", str(corpus / "toy0.txt"),
            "--iters", "2",
            "--seed", "3",
            "--out", str(out),
            "--snapshots", str(snapshots),
        ],
    )
    assert result.exit_code == 0, result.output
    assert out.exists() and out.with_suffix(".txt").exists()
    assert sorted(p.name for p in snapshots.iterdir()) == [
        "iteration_00.txt",
        "iteration_01.txt",
    ]
    assert out.read_bytes()[:4] == b"MThd"


def test_transfer_requires_melody(workspace, runner, tmp_path):
    root, corpus, run_dir = workspace
    bare = tmp_path / "bare.txt"
    bare.write_text(
        "ticks_per_beat=8\nbeats_per_measure=4\nlength_ticks=32\n40 0 8 -\n", encoding="utf-8"
    )
    result = runner.invoke(
        main,
        [
            "transfer",
            "--checkpoint", str(run_dir / "checkpoint_final.txt"),
            "--input", str(bare),
            "--out", str(tmp_path / "x.mid"),
        ],
    )
    assert result.exit_code != 0
    assert "melody" in result.output


def test_analyze_writes_tables(runner, tmp_path):
    # build a small session export via the service, then analyze it
    pieces = make_toy_corpus(2, measures=1)
    clips = {}
    for i, piece in enumerate(pieces):
        for system in ("candidate", "reference"):
            cid = f"clip-{i}{system[0]}"
            clips[cid] = ClipInfo(cid, piece.piece_id, "bach", system, write_score_text(piece.score))

    clock = [1_000_000.0]
    store = SessionStore(tmp_path / "logs", clips, clock=lambda: clock[0])
    client = TestClient(create_app(store))
    for editor in ("e1", "e2", "e3"):
        for cid in clips:
            doc = client.post("/sessions", json={"editor_id": editor, "clip_id": cid}).json()
            sid = doc["session_id"]
            events = [
                {"timestamp_ms": 10 * k, "kind": "key_press" if k % 2 else "mouse_click"}
                for k in range(1, 7)
            ]
            client.post(f"/sessions/{sid}/events", json={"events": events})
            clock[0] += 300.0
            client.post(
                f"/sessions/{sid}/submit",
                json={"edited_score": clips[cid].score_text, "eq1": 4, "eq2": 3, "eq3": 4},
            )
    docs = client.get("/export").json()["sessions"]
    export_dir = tmp_path / "export"
    write_export(docs, export_dir)

    listen = tmp_path / "listen.csv"
    rows = ["piece_id,style,system,rater_id,lq1"]
    for i in range(2):
        for system in ("candidate", "reference"):
            rows.append(f"toy{i},bach,{system},l1,{4 if system == 'candidate' else 2}")
    listen.write_text("\n".join(rows) + "\n", encoding="utf-8")

    out_dir = tmp_path / "tables"
    result = runner.invoke(
        main,
        ["analyze", "--sessions", str(export_dir), "--listen", str(listen), "--out", str(out_dir)],
    )
    assert result.exit_code == 0, result.output
    for name in ("table3.txt", "table3.json", "table4.txt", "table4.json"):
        assert (out_dir / name).exists()
    table3 = (out_dir / "table3.txt").read_text()
    assert "Performance ratio" in table3 and "±" in table3


def test_init_config_round_trip(runner, tmp_path):
    path = tmp_path / "model.cfg"
    result = runner.invoke(main, ["init-config", "--out", str(path), "--tiny"])
    assert result.exit_code == 0
    from bmst.model import read_config

    assert read_config(path) == TINY_CONFIG
