#!/usr/bin/env python3
"""Desk-scale memorization experiment.

Trains the tiny model on the 4-piece synthetic corpus and reports the
teacher-forcing element-wise error rate on the training pieces, the same
metric the full-scale setup reports on held-out corpora.

Usage: python scripts/run_overfit.py [--steps 2000] [--seed 0] [--out DIR]
"""

import argparse
import time
from pathlib import Path

from bmst.corpus import make_toy_corpus
from bmst.model import TINY_CONFIG
from bmst.params import AdamConfig
from bmst.training import TrainSettings, evaluate_error_rate, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--learning-rate", type=float, default=2e-3)
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    pieces = make_toy_corpus()
    settings = TrainSettings(
        steps=args.steps,
        seed=args.seed,
        adam=AdamConfig(learning_rate=args.learning_rate),
        checkpoint_every=500,
        out_dir=args.out,
    )
    started = time.perf_counter()
    store, report = train(pieces, TINY_CONFIG, settings)
    train_seconds = time.perf_counter() - started

    losses = [s.total for s in report.steps]
    print(f"trained {args.steps} steps in {train_seconds:.0f}s "
          f"(loss {losses[0]:.4f} -> {losses[-1]:.4f})")

    started = time.perf_counter()
    rate = evaluate_error_rate(store, pieces, TINY_CONFIG)
    print(f"teacher-forcing element error rate: {rate:.3f}% "
          f"({time.perf_counter() - started:.0f}s, {sum(p.score.length_ticks for p in pieces)} timesteps)")
    density = 100.0 * sum(
        float(p.score.to_roll().activations.mean()) for p in pieces
    ) / len(pieces)
    print(f"(all-silent baseline would score {density:.3f}%)")


if __name__ == "__main__":
    main()
