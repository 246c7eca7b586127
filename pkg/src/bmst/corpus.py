"""Corpus loading and the synthetic toy corpus used by the scaled-down oracles."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .midi import export_midi, import_midi
from .score import (
    ACCOMPANIMENT,
    MELODY,
    NoteEvent,
    Score,
    read_score_text,
    write_score_text,
)


@dataclass
class Piece:
    piece_id: str
    score: Score


def load_corpus(directory: str | Path) -> list[Piece]:
    """Read every .mid/.midi/.txt score in a directory, sorted by name."""
    directory = Path(directory)
    pieces = []
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() in (".mid", ".midi"):
            pieces.append(Piece(path.stem, import_midi(path.read_bytes())))
        elif path.suffix.lower() == ".txt":
            pieces.append(Piece(path.stem, read_score_text(path.read_text(encoding="utf-8"))))
    if not pieces:
        raise FileNotFoundError(f"no .mid or .txt scores found in {directory}")
    return pieces


def save_piece(piece: Piece, directory: str | Path, fmt: str = "txt") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if fmt == "txt":
        path = directory / f"{piece.piece_id}.txt"
        path.write_text(write_score_text(piece.score), encoding="utf-8")
    elif fmt == "mid":
        path = directory / f"{piece.piece_id}.mid"
        path.write_bytes(export_midi(piece.score))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


# Root-position triads (semitone offsets) used by the toy accompaniments.
_TRIADS = [(0, 4, 7), (0, 3, 7), (0, 4, 7), (0, 5, 9)]


def make_toy_corpus(n_pieces: int = 4, measures: int = 2) -> list[Piece]:
    """Small, highly regular pieces a tiny model can memorize.

    Each piece: a repeating four-note melody in quarter notes over block
    triads, shifted to a piece-specific register. Two 4/4 measures by default.
    """
    pieces = []
    length = measures * 32
    for k in range(n_pieces):
        notes: list[NoteEvent] = []
        melody_base = 39 + 3 * k  # around middle of the range
        chord_base = 18 + 2 * k
        steps = [0, 2, 4, 2]
        for beat in range(measures * 4):
            pitch = melody_base + steps[beat % 4]
            notes.append(NoteEvent(pitch, beat * 8, 8, MELODY))
        for half in range(measures * 2):
            triad = _TRIADS[(half + k) % len(_TRIADS)]
            root = chord_base + (half % 2) * 5
            for offset in triad:
                notes.append(NoteEvent(root + offset, half * 16, 16, ACCOMPANIMENT))
        pieces.append(Piece(f"toy{k}", Score(notes, beats_per_measure=4, length_ticks=length)))
    return pieces
