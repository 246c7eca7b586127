from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmst.model import BmstConfig, init_params
from bmst.score import MELODY, NoteEvent, PianoRoll, Score, quantize
from bmst.transfer import (
    AnnealSchedule,
    MelodyMask,
    OnsetGrid,
    anneal_alpha,
    gibbs_transfer,
    onset_postprocess,
    transfer_score,
)

SMALL = BmstConfig(
    context_len=5,
    model_dim=8,
    heads=2,
    encoder_layers=1,
    ff_dim=16,
    gru_hidden=4,
    cvar_layers=3,
    cvar_channels=6,
    condition_dim=8,
    embed_dim=8,
    pitches=8,
)


def small_piece():
    notes = [NoteEvent(3, t * 4, 4, MELODY) for t in range(4)]
    notes += [NoteEvent(0, 0, 8), NoteEvent(5, 8, 8)]
    return Score(notes, beats_per_measure=2, length_ticks=16)


# --- schedule -------------------------------------------------------------------


def test_alpha_at_origin():
    assert anneal_alpha(AnnealSchedule(), 0) == 0.6


def test_alpha_clamps_to_min():
    sched = AnnealSchedule()
    for n in range(11, 25):
        assert anneal_alpha(sched, n) == 0.0


def test_alpha_closed_form_value():
    sched = AnnealSchedule(alpha_max=0.6, alpha_min=0.0, total_iterations=15, eta=1.0)
    assert anneal_alpha(sched, 5) == pytest.approx(0.6 - 5 * 0.6 / 15, abs=1e-15)


@pytest.mark.parametrize("eta", [0.5, 0.7, 1.0])
def test_alpha_matches_formula_everywhere(eta):
    sched = AnnealSchedule(alpha_max=0.6, alpha_min=0.0, total_iterations=15, eta=eta)
    for n in range(21):
        expected = max(0.0, 0.6 - n * 0.6 / (eta * 15))
        assert anneal_alpha(sched, n) == expected


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
    st.integers(1, 40),
    st.floats(0.05, 3.0),
    st.integers(0, 80),
)
def test_alpha_monotone_and_bounded(a, b, n_total, eta, n):
    lo, hi = sorted((a, b))
    sched = AnnealSchedule(alpha_max=hi, alpha_min=lo, total_iterations=n_total, eta=eta)
    value = anneal_alpha(sched, n)
    assert lo <= value <= hi
    assert anneal_alpha(sched, n + 1) <= value


def test_schedule_validation():
    with pytest.raises(ValueError):
        AnnealSchedule(alpha_max=0.2, alpha_min=0.4)
    with pytest.raises(ValueError):
        AnnealSchedule(total_iterations=0)
    with pytest.raises(ValueError):
        AnnealSchedule(eta=0.0)
    with pytest.raises(ValueError):
        anneal_alpha(AnnealSchedule(), -1)


# --- melody mask -----------------------------------------------------------------


def test_melody_mask_from_score():
    mask = MelodyMask.from_score(small_piece())
    assert (3, 0) in mask.cells and (3, 15) in mask.cells
    assert (0, 0) not in mask.cells


def test_melody_mask_validation():
    roll = small_piece().to_roll()
    with pytest.raises(ValueError, match="bounds"):
        MelodyMask(frozenset({(3, 99)})).validate(roll)
    with pytest.raises(ValueError, match="not active"):
        MelodyMask(frozenset({(7, 0)})).validate(roll)


# --- gibbs ------------------------------------------------------------------------


def test_degenerate_schedule_returns_input():
    score = small_piece()
    roll = score.to_roll()
    melody = MelodyMask.from_score(score)
    store = init_params(SMALL, seed=0)
    sched = AnnealSchedule(alpha_max=0.0, alpha_min=0.0, total_iterations=3)
    out = gibbs_transfer(
        roll, melody, store, SMALL, sched, np.random.default_rng(0), empty_set_fallback=False
    )
    np.testing.assert_array_equal(out.activations, roll.activations)


def test_melody_cells_clamped_every_iteration():
    score = small_piece()
    roll = score.to_roll()
    melody = MelodyMask.from_score(score)
    store = init_params(SMALL, seed=1)
    seen = []

    def check(n, snapshot):
        seen.append(n)
        for pitch, tick in melody.cells:
            assert snapshot.activations[pitch, tick] == 1, (n, pitch, tick)

    sched = AnnealSchedule(total_iterations=4)
    out = gibbs_transfer(roll, melody, store, SMALL, sched, np.random.default_rng(3), on_iteration=check)
    assert seen == [0, 1, 2, 3]
    for pitch, tick in melody.cells:
        assert out.activations[pitch, tick] == 1


def test_gibbs_reproducible_from_seed():
    score = small_piece()
    roll = score.to_roll()
    melody = MelodyMask.from_score(score)
    store = init_params(SMALL, seed=1)
    sched = AnnealSchedule(total_iterations=3)
    a = gibbs_transfer(roll, melody, store, SMALL, sched, np.random.default_rng(7))
    b = gibbs_transfer(roll, melody, store, SMALL, sched, np.random.default_rng(7))
    assert a == b


def test_gibbs_changes_accompaniment_but_not_shape():
    score = small_piece()
    roll = score.to_roll()
    store = init_params(SMALL, seed=2)
    out = gibbs_transfer(
        roll, MelodyMask.from_score(score), store, SMALL,
        AnnealSchedule(total_iterations=2), np.random.default_rng(0),
    )
    assert out.activations.shape == roll.activations.shape
    assert out.beats_per_measure == roll.beats_per_measure


# --- onset rule --------------------------------------------------------------------


def test_onset_product_rule_cases():
    values = np.array([[0.3 * 0.2, 0.3 * 0.1, 0.05, 0.050001]])
    grid = OnsetGrid(values)
    cells = grid.onset_cells()
    assert cells[0, 0]  # 0.06 > 0.05
    assert not cells[0, 1]  # 0.03
    assert not cells[0, 2]  # exactly 0.05 is not an onset (strict >)
    assert cells[0, 3]


def test_onset_product_symmetric():
    rng = np.random.default_rng(0)
    f, b = rng.random(50), rng.random(50)
    np.testing.assert_array_equal(f * b, b * f)


def test_onset_postprocess_marks_only_active_cells():
    score = small_piece()
    roll = score.to_roll()
    store = init_params(SMALL, seed=3)
    grid, notes = onset_postprocess(roll, store, SMALL)
    assert np.all(grid.values >= 0) and np.all(grid.values <= 1)
    for note in notes:
        run = roll.activations[note.pitch_index, note.onset_tick : note.end_tick]
        assert run.all()


def test_onset_postprocess_splits_runs():
    # force a high onset product mid-run by construction: with random params
    # probabilities hover near 0.5, so most active cells exceed 0.05 and long
    # runs split; every emitted onset must sit on an active cell
    score = small_piece()
    roll = score.to_roll()
    store = init_params(SMALL, seed=4)
    _, notes = onset_postprocess(roll, store, SMALL)
    rebuilt = quantize(notes, score.length_ticks, score.beats_per_measure)
    np.testing.assert_array_equal(rebuilt.activations, roll.activations)


# --- convergence toward the learned arrangement ------------------------------------


def test_error_to_corpus_decreases_in_expectation(toy_pieces_1measure, overfit_model_short):
    """With a model overfit to the corpus containing the clamped melody, the
    non-melody disagreement with the corpus arrangement shrinks over
    iterations, averaged across seeds."""
    from bmst.model import TINY_CONFIG

    store = overfit_model_short
    target = toy_pieces_1measure[0].score
    target_roll = target.to_roll()
    melody = MelodyMask.from_score(target)
    melody_grid = np.zeros_like(target_roll.activations, dtype=bool)
    for p, t in melody.cells:
        melody_grid[p, t] = True

    rng0 = np.random.default_rng(99)
    corrupted = target_roll.activations.copy()
    corrupted[~melody_grid] = 0
    corrupted[(rng0.random(corrupted.shape) < 0.15) & ~melody_grid] = 1
    start = PianoRoll(corrupted, np.zeros_like(corrupted), np.zeros_like(corrupted))

    def error(roll):
        return float(np.mean(roll.activations[~melody_grid] != target_roll.activations[~melody_grid]))

    schedule = AnnealSchedule(total_iterations=6)
    curves = []
    for seed in range(20):
        trace = []
        gibbs_transfer(
            start, melody, store, TINY_CONFIG, schedule, np.random.default_rng(seed),
            on_iteration=lambda n, roll: trace.append(error(roll)),
        )
        curves.append(trace)
    mean_curve = np.mean(curves, axis=0)
    initial = error(start)

    assert mean_curve[0] < initial
    for before, after in zip(mean_curve, mean_curve[1:]):
        assert after <= before + 0.005, mean_curve
    assert mean_curve[-1] < 0.5 * initial


# --- end to end ----------------------------------------------------------------------


def test_transfer_score_keeps_melody_and_length():
    score = small_piece()
    store = init_params(SMALL, seed=5)
    out = transfer_score(score, store, SMALL, AnnealSchedule(total_iterations=2), seed=0)
    assert out.length_ticks == score.length_ticks
    melody_cells = score.melody_cells()
    out_roll = out.to_roll()
    for pitch, tick in melody_cells:
        assert out_roll.activations[pitch, tick] == 1
    assert any(n.voice_tag == MELODY for n in out.notes)
