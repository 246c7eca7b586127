"""Trainable parameter storage, the Adam optimizer, and checkpoint files.

Checkpoints are versioned text documents: one header line, then for every
parameter a descriptor line (name, dtype, shape) followed by the raw array
bytes in hex. Identical parameters serialize to identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, default_dtype

CHECKPOINT_MAGIC = "bmst-params"
CHECKPOINT_VERSION = 1


class OptimizerError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


class ParameterStore:
    """Named trainable tensors with deterministic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(data, dtype=default_dtype()).copy(), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def group(self, prefix: str) -> dict[str, Tensor]:
        """Sub-dictionary of parameters under `prefix.`, keyed by the suffix."""
        out = {
            name[len(prefix) + 1 :]: t
            for name, t in self._params.items()
            if name.startswith(prefix + ".")
        }
        if not out:
            raise KeyError(f"no parameters under prefix {prefix!r}")
        return out

    def copy(self) -> "ParameterStore":
        clone = ParameterStore()
        for name, t in self._params.items():
            clone.add(name, t.data.copy())
        return clone

    def l2_distance(self, other: "ParameterStore") -> float:
        total = 0.0
        for name, t in self._params.items():
            total += float(np.sum((t.data - other[name].data) ** 2))
        return float(np.sqrt(total))


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParameterStore, config: AdamConfig, state: AdamState) -> None:
    """One Adam update from the gradients currently held in the store.

    Parameters with no gradient are left untouched. Any non-finite gradient
    rejects the whole step before mutating anything.
    """
    for name, t in store.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise OptimizerError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    for name, t in store.items():
        if t.grad is None:
            continue
        m = state.first_moment.setdefault(name, np.zeros_like(t.data))
        v = state.second_moment.setdefault(name, np.zeros_like(t.data))
        m *= b1
        m += (1.0 - b1) * t.grad
        v *= b2
        v += (1.0 - b2) * t.grad**2
        m_hat = m / correction1
        v_hat = v / correction2
        t.data -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


# --- checkpoint i/o -----------------------------------------------------------


def save_checkpoint(store: ParameterStore, path: str | Path) -> None:
    lines = [f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION} count={len(store)}"]
    for name, t in store.items():
        shape = " ".join(str(d) for d in t.data.shape)
        lines.append(f"param {name} {t.data.dtype.name} {shape}".rstrip())
        lines.append(t.data.tobytes().hex())
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_checkpoint(path: str | Path) -> ParameterStore:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines:
        raise CheckpointError("empty checkpoint file")
    header = lines[0].split()
    if len(header) < 2 or header[0] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad header {lines[0]!r}")
    if header[1] != f"v{CHECKPOINT_VERSION}":
        raise CheckpointError(f"unsupported checkpoint version {header[1]}")

    store = ParameterStore()
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        fields = lines[i].split()
        if fields[0] != "param" or len(fields) < 3:
            raise CheckpointError(f"line {i + 1}: expected a param descriptor, got {lines[i]!r}")
        name, dtype_name = fields[1], fields[2]
        shape = tuple(int(d) for d in fields[3:])
        if i + 1 >= len(lines):
            raise CheckpointError(f"missing data for parameter {name!r}")
        raw = bytes.fromhex(lines[i + 1].strip())
        arr = np.frombuffer(raw, dtype=np.dtype(dtype_name)).reshape(shape)
        store.add(name, arr)
        i += 2
    return store
