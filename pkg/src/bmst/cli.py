"""Command-line entry points: train, eval, transfer, analyze, serve."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .analytics import (
    comparison_sets,
    format_ratio_table,
    load_session_documents,
    ratio_table_json,
    read_listener_ratings,
    sample_record_from_session,
)
from .corpus import load_corpus, make_toy_corpus, save_piece
from .midi import export_midi, import_midi
from .model import BmstConfig, TINY_CONFIG, read_config, write_config
from .params import AdamConfig, load_checkpoint
from .score import read_score_text, write_score_text
from .service import ClipInfo, SessionStore, build_assignment, create_app
from .training import TrainSettings, evaluate_error_rate
from .training import train as run_training
from .transfer import AnnealSchedule, transfer_score


@click.group()
def main() -> None:
    """Music style-transfer workbench."""


@main.command("toy-corpus")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--pieces", default=4, show_default=True)
@click.option("--measures", default=2, show_default=True)
@click.option("--format", "fmt", default="txt", type=click.Choice(["txt", "mid"]), show_default=True)
def toy_corpus(out_dir: Path, pieces: int, measures: int, fmt: str) -> None:
    """Write the synthetic toy corpus used by the scaled-down experiments."""
    for piece in make_toy_corpus(pieces, measures):
        path = save_piece(piece, out_dir, fmt)
        click.echo(f"wrote {path}")


@main.command("init-config")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--tiny", is_flag=True, help="Desk-scale configuration instead of full size.")
def init_config(out_path: Path, tiny: bool) -> None:
    """Write a model configuration file to edit and pass to `train`."""
    write_config(TINY_CONFIG if tiny else BmstConfig(), out_path)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--steps", default=500, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--checkpoint-every", default=250, show_default=True)
@click.option("--no-augment", is_flag=True, help="Disable random transposition.")
def train(corpus_dir, config_path, steps, seed, out_dir, learning_rate, checkpoint_every, no_augment):
    """Train on a corpus directory of .mid/.txt scores."""
    pieces = load_corpus(corpus_dir)
    config = read_config(config_path) if config_path else BmstConfig()
    settings = TrainSettings(
        steps=steps,
        seed=seed,
        adam=AdamConfig(learning_rate=learning_rate),
        checkpoint_every=checkpoint_every,
        out_dir=out_dir,
        augment=not no_augment,
    )
    _, report = run_training(pieces, config, settings)
    losses = [s.total for s in report.steps]
    click.echo(
        f"trained {steps} steps on {len(pieces)} pieces in {report.wall_clock_seconds:.1f}s"
    )
    if losses:
        click.echo(f"loss first/last: {losses[0]:.4f} / {losses[-1]:.4f}")
    report_path = Path(out_dir) / "train_report.json"
    report_path.write_text(
        json.dumps(
            {
                "config_hash": report.config_hash,
                "wall_clock_seconds": report.wall_clock_seconds,
                "steps": [
                    {
                        "step": s.step,
                        "total": s.total,
                        "forward": s.forward_term,
                        "backward": s.backward_term,
                        "cvar": s.cvar_term,
                    }
                    for s in report.steps
                ],
                "validation_curve": report.validation_curve,
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    click.echo(f"wrote {report_path}")


def _load_model(checkpoint: Path, config_path: Path | None):
    store = load_checkpoint(checkpoint)
    if config_path is None:
        candidate = checkpoint.parent / "model.cfg"
        if not candidate.exists():
            raise click.UsageError("no --config given and no model.cfg beside the checkpoint")
        config_path = candidate
    return store, read_config(config_path)


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", type=click.Path(path_type=Path))
def evaluate(checkpoint, corpus_dir, config_path, out_path):
    """Teacher-forcing element-wise error rate over a corpus, in percent."""
    store, config = _load_model(checkpoint, config_path)
    pieces = load_corpus(corpus_dir)
    rate = evaluate_error_rate(store, pieces, config)
    click.echo(f"{rate:.3f}%")
    report = {
        "error_rate_percent": rate,
        "pieces": [p.piece_id for p in pieces],
        "checkpoint": str(checkpoint),
    }
    out_path = out_path or Path(corpus_dir) / "error_rate.json"
    Path(out_path).write_text(json.dumps(report, indent=2), encoding="utf-8")
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--melody-track", type=int, help="MIDI track index carrying the melody.")
@click.option("--iters", default=15, show_default=True)
@click.option("--alpha-max", default=0.6, show_default=True)
@click.option("--alpha-min", default=0.0, show_default=True)
@click.option("--eta", default=0.7, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--snapshots", "snapshot_dir", type=click.Path(path_type=Path))
def transfer(checkpoint, config_path, input_path, melody_track, iters, alpha_max, alpha_min, eta, seed, out_path, snapshot_dir):
    """Re-arrange a piece into the model's style, keeping its melody."""
    store, config = _load_model(checkpoint, config_path)
    if input_path.suffix.lower() in (".mid", ".midi"):
        score = import_midi(input_path.read_bytes(), melody_track=melody_track)
    else:
        score = read_score_text(input_path.read_text(encoding="utf-8"))
    if not score.melody_cells():
        raise click.UsageError("input has no melody notes; use --melody-track or tag the score")

    schedule = AnnealSchedule(alpha_max, alpha_min, iters, eta)
    hooks = None
    if snapshot_dir:
        snapshot_dir = Path(snapshot_dir)
        snapshot_dir.mkdir(parents=True, exist_ok=True)

        def hooks(n, roll):
            from .score import Score, to_notes

            snap = Score(to_notes(roll), score.beats_per_measure, score.length_ticks)
            (snapshot_dir / f"iteration_{n:02d}.txt").write_text(
                write_score_text(snap), encoding="utf-8"
            )

    result = transfer_score(score, store, config, schedule, seed=seed, on_iteration=hooks)
    out_path = Path(out_path)
    out_path.write_bytes(export_midi(result))
    text_path = out_path.with_suffix(".txt")
    text_path.write_text(write_score_text(result), encoding="utf-8")
    click.echo(f"wrote {out_path} and {text_path}")


@main.command()
@click.option("--sessions", "session_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--listen", "listen_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--per-response", is_flag=True, help="Correlate per response instead of per sample.")
def analyze(session_dir, listen_path, out_dir, per_response):
    """Build the loading-ratio table and the four correlation tables."""
    documents = load_session_documents(session_dir)
    records = [r for r in map(sample_record_from_session, documents) if r is not None]
    skipped = len(documents) - len(records)
    if skipped:
        click.echo(f"skipped {skipped} session(s) without submitted ratings")
    ratings = None
    if listen_path:
        ratings = read_listener_ratings(Path(listen_path).read_text(encoding="utf-8"))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    styles = tuple(sorted({r.target_style for r in records}))
    (out_dir / "table3.txt").write_text(format_ratio_table(records, styles) + "\n", encoding="utf-8")
    (out_dir / "table3.json").write_text(ratio_table_json(records, styles) + "\n", encoding="utf-8")
    sets = comparison_sets(records, ratings, per_response=per_response)
    (out_dir / "table4.txt").write_text(sets.formatted() + "\n", encoding="utf-8")
    (out_dir / "table4.json").write_text(sets.to_json() + "\n", encoding="utf-8")
    for name in ("table3.txt", "table3.json", "table4.txt", "table4.json"):
        click.echo(f"wrote {out_dir / name}")


@main.command()
@click.option("--clips", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--sessions", "session_dir", required=True, type=click.Path(path_type=Path))
@click.option("--editors", "editors_path", type=click.Path(exists=True, path_type=Path))
@click.option("--seed", default=0, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(manifest_path, session_dir, editors_path, seed, host, port):
    """Run the editing-test session service.

    The manifest is JSON: [{"clip_id", "piece_id", "style", "system",
    "score_file"}]; score files are interchange text relative to the
    manifest location.
    """
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    base = Path(manifest_path).parent
    clips = {}
    for entry in manifest:
        score_text = (base / entry["score_file"]).read_text(encoding="utf-8")
        clips[entry["clip_id"]] = ClipInfo(
            entry["clip_id"], entry["piece_id"], entry["style"], entry["system"], score_text
        )
    plan = None
    if editors_path:
        editors = [
            line.strip()
            for line in Path(editors_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        plan = build_assignment(editors, list(clips.values()), seed=seed)
        click.echo(f"assignment plan built for {len(editors)} editors (seed {seed})")
        if plan.relaxed:
            click.echo(f"note: {len(plan.relaxed)} same-piece conflicts could not be avoided")
    store = SessionStore(session_dir, clips, plan=plan)
    app = create_app(store)
    import uvicorn

    click.echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
