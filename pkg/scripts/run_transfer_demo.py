#!/usr/bin/env python3
"""Train a tiny style model, corrupt one piece's accompaniment, and watch the
annealed Gibbs chain pull it back toward the learned arrangement.

Usage: python scripts/run_transfer_demo.py [--iters 15] [--seed 0] [--out DIR]
"""

import argparse
from pathlib import Path

import numpy as np

from bmst.corpus import make_toy_corpus
from bmst.model import TINY_CONFIG
from bmst.params import AdamConfig
from bmst.score import PianoRoll, Score, to_notes, write_score_text
from bmst.training import TrainSettings, train
from bmst.transfer import AnnealSchedule, MelodyMask, anneal_alpha, gibbs_transfer, onset_postprocess


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train-steps", type=int, default=3000)
    parser.add_argument("--iters", type=int, default=15)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--noise", type=float, default=0.15)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    pieces = make_toy_corpus(n_pieces=4, measures=1)
    print(f"training on {len(pieces)} pieces ...")
    store, _ = train(
        pieces,
        TINY_CONFIG,
        TrainSettings(steps=args.train_steps, seed=0, checkpoint_every=0,
                      adam=AdamConfig(learning_rate=2e-3)),
    )

    target = pieces[0].score
    target_roll = target.to_roll()
    melody = MelodyMask.from_score(target)
    melody_grid = np.zeros_like(target_roll.activations, dtype=bool)
    for p, t in melody.cells:
        melody_grid[p, t] = True

    rng = np.random.default_rng(args.seed)
    corrupted = target_roll.activations.copy()
    corrupted[~melody_grid] = 0
    corrupted[(rng.random(corrupted.shape) < args.noise) & ~melody_grid] = 1
    start = PianoRoll(corrupted, np.zeros_like(corrupted), np.zeros_like(corrupted))

    def disagreement(roll):
        return float(np.mean(roll.activations[~melody_grid] != target_roll.activations[~melody_grid]))

    schedule = AnnealSchedule(total_iterations=args.iters)
    print(f"initial disagreement with the corpus arrangement: {disagreement(start):.4f}")

    snapshots = []

    def hook(n, roll):
        snapshots.append((n, roll))
        print(f"iteration {n:2d}: alpha={anneal_alpha(schedule, n):.3f} "
              f"disagreement={disagreement(roll):.4f}")

    result = gibbs_transfer(
        start, melody, store, TINY_CONFIG, schedule,
        np.random.default_rng(args.seed), on_iteration=hook,
    )
    grid, notes = onset_postprocess(result, store, TINY_CONFIG)
    print(f"final: {len(notes)} notes, {int(grid.onset_cells().sum())} model-placed onsets")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        for n, roll in snapshots:
            snap = Score(to_notes(roll), target.beats_per_measure, target.length_ticks)
            (args.out / f"iteration_{n:02d}.txt").write_text(write_score_text(snap))
        final = Score(notes, target.beats_per_measure, target.length_ticks)
        (args.out / "final.txt").write_text(write_score_text(final))
        print(f"wrote snapshots to {args.out}")


if __name__ == "__main__":
    main()
