"""Style transfer by annealed Gibbs sampling with the melody clamped.

Each iteration re-imposes the melody cells, draws a random set of cells to
update (the annealed fraction), and resamples those cells timestep by
timestep from the model's pitch conditionals. A final pass over the result
multiplies the two directions' onset probabilities to recover note onsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import BmstConfig, extract_window, predict_current
from .params import ParameterStore
from .score import (
    ACCOMPANIMENT,
    MELODY,
    NoteEvent,
    PianoRoll,
    Score,
    render_metadata,
    to_notes,
)

ONSET_THRESHOLD = 0.05


@dataclass(frozen=True)
class AnnealSchedule:
    alpha_max: float = 0.6
    alpha_min: float = 0.0
    total_iterations: int = 15
    eta: float = 0.7

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha_min <= self.alpha_max <= 1.0:
            raise ValueError(
                f"need 0 <= alpha_min <= alpha_max <= 1, got ({self.alpha_min}, {self.alpha_max})"
            )
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")
        if self.eta <= 0.0:
            raise ValueError("eta must be > 0")


def anneal_alpha(schedule: AnnealSchedule, n: int) -> float:
    """Masking probability at iteration n: linear decay clamped at alpha_min."""
    if n < 0:
        raise ValueError("iteration index must be >= 0")
    span = schedule.alpha_max - schedule.alpha_min
    return max(
        schedule.alpha_min,
        schedule.alpha_max - n * span / (schedule.eta * schedule.total_iterations),
    )


@dataclass(frozen=True)
class MelodyMask:
    cells: frozenset[tuple[int, int]]  # (pitch, timestep) pairs held fixed

    @classmethod
    def from_score(cls, score: Score) -> "MelodyMask":
        return cls(frozenset(score.melody_cells()))

    def validate(self, roll: PianoRoll) -> None:
        for pitch, tick in self.cells:
            if not (0 <= pitch < roll.activations.shape[0] and 0 <= tick < roll.length_ticks):
                raise ValueError(f"melody cell ({pitch}, {tick}) outside the roll bounds")
            if not roll.activations[pitch, tick]:
                raise ValueError(f"melody cell ({pitch}, {tick}) is not active in the input")


@dataclass
class OnsetGrid:
    """Product of the two directions' onset probabilities per cell."""

    values: np.ndarray
    threshold: float = ONSET_THRESHOLD

    def onset_cells(self) -> np.ndarray:
        return self.values > self.threshold


def _padded_roll(state: np.ndarray, like: PianoRoll) -> PianoRoll:
    """Wrap a (pitches, J) state array as a full 84-row roll with edge planes."""
    full = np.zeros_like(like.activations)
    full[: state.shape[0]] = state
    padded = np.pad(full, ((0, 0), (1, 1)))
    onsets = (padded[:, 1:-1] > padded[:, :-2]).astype(np.uint8)
    offsets = (padded[:, 1:-1] > padded[:, 2:]).astype(np.uint8)
    return PianoRoll(full, onsets, offsets, like.ticks_per_beat, like.beats_per_measure)


def gibbs_transfer(
    input_roll: PianoRoll,
    melody: MelodyMask,
    store: ParameterStore,
    config: BmstConfig,
    schedule: AnnealSchedule = AnnealSchedule(),
    rng: np.random.Generator | None = None,
    *,
    empty_set_fallback: bool = True,
    on_iteration: Callable[[int, PianoRoll], None] | None = None,
) -> PianoRoll:
    """Resample the accompaniment toward the learned style, melody fixed.

    Updates within an iteration happen in time order on the live state, so a
    later window sees this iteration's earlier updates. During all but the
    last iteration cells are drawn from the model's probabilities; the last
    iteration decodes deterministically at threshold 0.5. When the annealed
    fraction reaches zero the chain would freeze, so (by default) an empty
    draw falls back to one full sweep over all non-melody cells.
    """
    melody.validate(input_roll)
    rng = rng or np.random.default_rng(0)
    metadata = render_metadata(input_roll.length_ticks, input_roll.beats_per_measure)

    n_pitches = config.pitches
    state = input_roll.activations[:n_pitches].astype(np.uint8).copy()
    length = input_roll.length_ticks
    melody_grid = np.zeros_like(state, dtype=bool)
    for pitch, tick in melody.cells:
        if pitch < n_pitches:
            melody_grid[pitch, tick] = True

    for n in range(schedule.total_iterations):
        alpha = anneal_alpha(schedule, n)
        state[melody_grid] = 1

        update = (rng.random(state.shape) < alpha) & ~melody_grid
        if not update.any():
            if not empty_set_fallback:
                if on_iteration:
                    on_iteration(n, _padded_roll(state, input_roll))
                continue
            update = ~melody_grid

        last = n == schedule.total_iterations - 1
        for tick in range(length):
            if not update[:, tick].any():
                continue
            clamp = {
                int(p): int(state[p, tick]) for p in np.flatnonzero(~update[:, tick])
            }
            window = extract_window(
                _padded_roll(state, input_roll), metadata, tick, config
            )
            pred = predict_current(
                window,
                store,
                config,
                decode="threshold" if last else "sample",
                rng=rng,
                clamp=clamp,
                probs_for_clamped=False,
            )
            state[:, tick] = pred.column
        state[melody_grid] = 1
        if on_iteration:
            on_iteration(n, _padded_roll(state, input_roll))

    state[melody_grid] = 1
    return _padded_roll(state, input_roll)


def onset_postprocess(
    final_roll: PianoRoll,
    store: ParameterStore,
    config: BmstConfig,
    threshold: float = ONSET_THRESHOLD,
) -> tuple[OnsetGrid, list[NoteEvent]]:
    """One more model pass over the finished score to place note onsets.

    The onset likelihood of a cell is the product of the forward and backward
    onset probabilities; cells above the threshold (strictly) split sustained
    activation runs into repeated notes.
    """
    metadata = render_metadata(final_roll.length_ticks, final_roll.beats_per_measure)
    n_pitches = config.pitches
    length = final_roll.length_ticks
    grid = np.zeros((final_roll.activations.shape[0], length))
    for tick in range(length):
        window = extract_window(final_roll, metadata, tick, config)
        truth = window.activations[:, config.current_index]
        pred = predict_current(window, store, config, teacher_column=truth)
        grid[:n_pitches, tick] = pred.onset_forward * pred.onset_backward

    onsets = (grid > threshold) & (final_roll.activations > 0)
    # every activation run must begin with an onset for segmentation
    padded = np.pad(final_roll.activations, ((0, 0), (1, 0)))
    run_starts = padded[:, 1:] > padded[:, :-1]
    segmentation = onsets | run_starts

    roll = PianoRoll(
        final_roll.activations.copy(),
        segmentation.astype(np.uint8),
        np.zeros_like(final_roll.offsets),
        final_roll.ticks_per_beat,
        final_roll.beats_per_measure,
    )
    notes = to_notes(roll)
    return OnsetGrid(grid, threshold), notes


def transfer_score(
    score: Score,
    store: ParameterStore,
    config: BmstConfig,
    schedule: AnnealSchedule = AnnealSchedule(),
    seed: int = 0,
    on_iteration: Callable[[int, PianoRoll], None] | None = None,
) -> Score:
    """End-to-end transfer of a Score: Gibbs resampling plus onset recovery.

    Melody notes keep their tag in the output; resampled content is tagged
    as accompaniment.
    """
    roll = score.to_roll()
    melody = MelodyMask.from_score(score)
    result = gibbs_transfer(
        roll,
        melody,
        store,
        config,
        schedule,
        np.random.default_rng(seed),
        on_iteration=on_iteration,
    )
    _, notes = onset_postprocess(result, store, config)

    melody_cells = set(melody.cells)
    tagged = []
    for note in notes:
        covered = all(
            (note.pitch_index, t) in melody_cells
            for t in range(note.onset_tick, note.end_tick)
        )
        tagged.append(
            NoteEvent(
                note.pitch_index,
                note.onset_tick,
                note.duration_ticks,
                MELODY if covered else ACCOMPANIMENT,
            )
        )
    return Score(tagged, score.beats_per_measure, score.length_ticks)
