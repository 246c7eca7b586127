import numpy as np
import pytest

from bmst.params import (
    CheckpointError,
    ParameterStore,
    load_checkpoint,
    save_checkpoint,
)


def small_store():
    store = ParameterStore()
    rng = np.random.default_rng(5)
    store.add("layer.w", rng.standard_normal((3, 4)))
    store.add("layer.b", rng.standard_normal(4))
    store.add("scalarish", rng.standard_normal(1))
    return store


def test_checkpoint_round_trip_exact(tmp_path):
    store = small_store()
    path = tmp_path / "params.txt"
    save_checkpoint(store, path)
    loaded = load_checkpoint(path)
    assert loaded.names() == store.names()
    for name, t in store.items():
        np.testing.assert_array_equal(loaded[name].data, t.data)


def test_checkpoint_byte_stable(tmp_path):
    store = small_store()
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    save_checkpoint(store, a)
    save_checkpoint(store, b)
    assert a.read_bytes() == b.read_bytes()
    save_checkpoint(load_checkpoint(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_has_versioned_header(tmp_path):
    path = tmp_path / "params.txt"
    save_checkpoint(small_store(), path)
    assert path.read_text().splitlines()[0].startswith("bmst-params v1")


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a checkpoint\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_text("bmst-params v99 count=0\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    path.write_text("bmst-params v1 count=1\nparam w float64 2\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_store_rejects_duplicate_names():
    store = ParameterStore()
    store.add("w", np.zeros(2))
    with pytest.raises(KeyError):
        store.add("w", np.zeros(2))


def test_group_prefix():
    store = ParameterStore()
    store.add("gru.f.wz", np.zeros(2))
    store.add("gru.f.uz", np.zeros(2))
    store.add("other", np.zeros(2))
    group = store.group("gru.f")
    assert sorted(group) == ["uz", "wz"]
    with pytest.raises(KeyError):
        store.group("nope")
