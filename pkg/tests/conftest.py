"""Shared trained-model fixtures (session-scoped; training runs once)."""

import pytest

from bmst.corpus import make_toy_corpus
from bmst.model import TINY_CONFIG
from bmst.params import AdamConfig
from bmst.training import TrainSettings, train


@pytest.fixture(scope="session")
def toy_pieces_2measure():
    return make_toy_corpus(n_pieces=4, measures=2)


@pytest.fixture(scope="session")
def toy_pieces_1measure():
    return make_toy_corpus(n_pieces=4, measures=1)


@pytest.fixture(scope="session")
def overfit_model(toy_pieces_2measure):
    """Tiny model trained to memorize the 2-measure toy corpus."""
    store, report = train(
        toy_pieces_2measure,
        TINY_CONFIG,
        TrainSettings(steps=2000, seed=0, checkpoint_every=0, adam=AdamConfig(learning_rate=2e-3)),
    )
    return store, report


@pytest.fixture(scope="session")
def overfit_model_short(toy_pieces_1measure):
    """Sharper model on the 1-measure corpus, used by the sampling tests."""
    store, _ = train(
        toy_pieces_1measure,
        TINY_CONFIG,
        TrainSettings(steps=3000, seed=0, checkpoint_every=0, adam=AdamConfig(learning_rate=2e-3)),
    )
    return store
