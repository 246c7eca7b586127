"""Training loop, corpus splitting, and the teacher-forcing error-rate metric."""

from __future__ import annotations

import hashlib
import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Piece
from .model import (
    BmstConfig,
    compute_loss,
    extract_window,
    forward_pass,
    init_params,
    predict_current,
    sample_mask,
    write_config,
)
from .params import AdamConfig, AdamState, ParameterStore, adam_step, save_checkpoint
from .score import transpose

MAX_TRANSPOSE = 12


class TrainingAborted(RuntimeError):
    """Raised when a step produced a non-finite loss; a checkpoint was kept."""


@dataclass
class CorpusSplit:
    train: list[str]
    validation: list[str]
    test: list[str]
    fractions: tuple[float, float, float]
    seed: int


def split_corpus(
    piece_ids: list[str],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> CorpusSplit:
    """Seeded shuffle, then a contiguous three-way partition."""
    if not piece_ids:
        raise ValueError("empty corpus")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    ids = list(piece_ids)
    np.random.default_rng(seed).shuffle(ids)
    n = len(ids)
    b1 = round(fractions[0] * n)
    b2 = round((fractions[0] + fractions[1]) * n)
    return CorpusSplit(ids[:b1], ids[b1:b2], ids[b2:], tuple(fractions), seed)


@dataclass
class StepRecord:
    step: int
    total: float
    forward_term: float
    backward_term: float
    cvar_term: float


@dataclass
class TrainRunReport:
    steps: list[StepRecord] = field(default_factory=list)
    validation_curve: list[tuple[int, float]] = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    config_hash: str = ""

    def finite(self) -> bool:
        return all(
            np.isfinite([s.total, s.forward_term, s.backward_term, s.cvar_term]).all()
            for s in self.steps
        )


def config_hash(config: BmstConfig) -> str:
    buffer = io.StringIO()
    from dataclasses import fields as dc_fields

    for f in dc_fields(BmstConfig):
        buffer.write(f"{f.name}={getattr(config, f.name)!r}\n")
    return hashlib.sha256(buffer.getvalue().encode()).hexdigest()[:16]


@dataclass
class TrainSettings:
    steps: int = 500
    seed: int = 0
    adam: AdamConfig = field(default_factory=AdamConfig)
    checkpoint_every: int = 250
    out_dir: str | Path | None = None
    validate_every: int = 0
    augment: bool = True


def train(
    pieces: list[Piece],
    config: BmstConfig,
    settings: TrainSettings,
    validation_pieces: list[Piece] | None = None,
    store: ParameterStore | None = None,
) -> tuple[ParameterStore, TrainRunReport]:
    """Optimize from random windows: per step, pick a piece, transpose it by a
    random interval within an octave, draw a window and a mask, take one Adam
    step. Checkpoints are written at the configured cadence; a non-finite loss
    aborts with the last good checkpoint retained on disk."""
    if not pieces:
        raise ValueError("empty corpus")
    rng = np.random.default_rng(settings.seed)
    if store is None:
        store = init_params(config, seed=settings.seed)
    state = AdamState()
    report = TrainRunReport(config_hash=config_hash(config))
    out_dir = Path(settings.out_dir) if settings.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_config(config, out_dir / "model.cfg")

    cache = [(p, p.score.to_roll(), p.score.metadata()) for p in pieces]
    last_good: ParameterStore | None = None
    started = time.perf_counter()

    for step in range(1, settings.steps + 1):
        piece, roll, metadata = cache[rng.integers(len(cache))]
        if settings.augment:
            shift = int(rng.integers(-MAX_TRANSPOSE, MAX_TRANSPOSE + 1))
            roll_step = transpose(roll, shift) if shift else roll
        else:
            roll_step = roll
        center = int(rng.integers(roll.length_ticks))
        window = extract_window(roll_step, metadata, center, config)
        mask = sample_mask(config, rng)

        try:
            outputs = forward_pass(window, mask, store, config)
            total, breakdown = compute_loss(outputs, window, config)
        except FloatingPointError as exc:
            if out_dir:
                keep = last_good if last_good is not None else store
                save_checkpoint(keep, out_dir / "checkpoint_aborted.txt")
            raise TrainingAborted(f"step {step} ({piece.piece_id}): {exc}") from exc

        store.zero_grad()
        total.backward()
        adam_step(store, settings.adam, state)
        report.steps.append(
            StepRecord(step, breakdown.total, breakdown.forward_term, breakdown.backward_term, breakdown.cvar_term)
        )

        if settings.checkpoint_every and step % settings.checkpoint_every == 0:
            last_good = store.copy()
            if out_dir:
                save_checkpoint(store, out_dir / f"checkpoint_{step:06d}.txt")
        if settings.validate_every and validation_pieces and step % settings.validate_every == 0:
            report.validation_curve.append(
                (step, evaluate_error_rate(store, validation_pieces, config))
            )

    report.wall_clock_seconds = time.perf_counter() - started
    if out_dir:
        save_checkpoint(store, out_dir / "checkpoint_final.txt")
    return store, report


def evaluate_error_rate(
    store: ParameterStore,
    pieces: list[Piece],
    config: BmstConfig,
    threshold: float = 0.5,
) -> float:
    """Teacher-forcing element-wise error rate, in percent.

    Every timestep of every piece is decoded with ground truth as both the
    window context and the lower-pitch conditioning; mismatches are counted
    over all pitch cells.
    """
    if not pieces:
        raise ValueError("empty evaluation set")
    errors = 0
    cells = 0
    for piece in pieces:
        roll = piece.score.to_roll()
        metadata = piece.score.metadata()
        for center in range(roll.length_ticks):
            window = extract_window(roll, metadata, center, config)
            truth = window.activations[:, config.current_index]
            pred = predict_current(
                window, store, config, teacher_column=truth, threshold=threshold
            )
            errors += int(np.sum(pred.column != truth.astype(np.uint8)))
            cells += config.pitches
    return 100.0 * errors / cells
