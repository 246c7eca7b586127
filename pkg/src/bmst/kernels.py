"""Differentiable layers: attention with relative position bias, GRU,
gated dilated convolution, focal loss, and a finite-difference gradient checker.

All functions take and return `autodiff.Tensor`; parameters are plain Tensors
with `requires_grad=True` (see `params.ParameterStore`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class AttentionConfig:
    model_dim: int = 180
    heads: int = 4
    max_len: int = 257

    def __post_init__(self) -> None:
        if self.model_dim % self.heads != 0:
            raise ConfigurationError(
                f"model_dim {self.model_dim} not divisible by {self.heads} heads"
            )

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    @property
    def bias_length(self) -> int:
        return 2 * self.max_len - 1


@dataclass(frozen=True)
class FocalLossConfig:
    alpha_t: float = 0.25
    gamma: float = 2.0
    eps: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha_t < 1.0:
            raise ConfigurationError(f"alpha_t must be in (0,1), got {self.alpha_t}")
        if self.gamma < 0.0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")


# --- basic layers -----------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    y = ad.matmul(x, weight)
    if bias is not None:
        y = ad.add(y, bias)
    return y


def embedding_lookup(ids, table: Tensor) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding ids outside table of {table.shape[0]} rows")
    return ad.take(table, ids)


def pre_layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the feature (last) axis to zero mean / unit variance, then scale."""
    if x.shape[-1] != gain.shape[-1] or x.shape[-1] != bias.shape[-1]:
        raise ShapeError(f"layer norm feature size {x.shape} vs gain {gain.shape}, bias {bias.shape}")
    mean = ad.tmean(x, axis=-1, keepdims=True)
    centered = ad.add(x, ad.mul(mean, -1.0))
    var = ad.tmean(ad.mul(centered, centered), axis=-1, keepdims=True)
    inv_std = ad.power(ad.add(var, eps), -0.5)
    return ad.add(ad.mul(ad.mul(centered, inv_std), gain), bias)


# --- relative-position self-attention ---------------------------------------


def relative_bias_matrix(bias_vector: Tensor, length: int) -> Tensor:
    """L x L matrix whose (i, j) entry is bias_vector[i - j + L - 1]."""
    if bias_vector.shape != (2 * length - 1,):
        raise ShapeError(f"bias vector {bias_vector.shape} does not fit length {length}")
    i = np.arange(length)
    index = i[:, None] - i[None, :] + length - 1
    return ad.take(bias_vector, index)


def relative_self_attention(
    x: Tensor,
    wq: Tensor,
    wk: Tensor,
    wv: Tensor,
    wo: Tensor,
    bias_vector: Tensor,
    config: AttentionConfig,
    mask: np.ndarray | None = None,
) -> Tensor:
    length, dim = x.shape
    if dim != config.model_dim:
        raise ShapeError(f"input feature size {dim} != model_dim {config.model_dim}")
    if length > config.max_len:
        raise ConfigurationError(f"sequence length {length} exceeds configured maximum {config.max_len}")

    q = ad.matmul(x, wq)
    k = ad.matmul(x, wk)
    v = ad.matmul(x, wv)
    rel = relative_bias_matrix(bias_vector, length)
    scale = 1.0 / math.sqrt(config.head_dim)

    head_outputs = []
    for h in range(config.heads):
        cols = slice(h * config.head_dim, (h + 1) * config.head_dim)
        qh, kh, vh = q[:, cols], k[:, cols], v[:, cols]
        scores = ad.mul(ad.add(ad.matmul(qh, kh.T), rel), scale)
        if mask is not None:
            scores = ad.add(scores, mask)
        head_outputs.append(ad.matmul(ad.softmax(scores, axis=-1), vh))
    return ad.matmul(ad.concat(head_outputs, axis=1), wo)


# --- bidirectional GRU ------------------------------------------------------


def _gru_direction(xs: Tensor, p: dict[str, Tensor], reverse: bool) -> list[Tensor]:
    length = xs.shape[0]
    hidden = p["uz"].shape[0]
    h = Tensor(np.zeros((1, hidden), dtype=xs.data.dtype))
    order = range(length - 1, -1, -1) if reverse else range(length)
    states: dict[int, Tensor] = {}
    for t in order:
        x_t = xs[t : t + 1, :]
        z = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, p["wz"]), ad.matmul(h, p["uz"])), p["bz"]))
        r = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, p["wr"]), ad.matmul(h, p["ur"])), p["br"]))
        cand = ad.tanh(
            ad.add(ad.add(ad.matmul(x_t, p["wh"]), ad.matmul(ad.mul(r, h), p["uh"])), p["bh"])
        )
        one_minus_z = ad.add(ad.mul(z, -1.0), 1.0)
        h = ad.add(ad.mul(one_minus_z, h), ad.mul(z, cand))
        states[t] = h
    return [states[t] for t in range(length)]


def bi_gru(xs: Tensor, forward_params: dict[str, Tensor], backward_params: dict[str, Tensor]) -> Tensor:
    """Run a GRU in both directions; output row t is [fwd_t, bwd_t]."""
    if xs.shape[0] == 0:
        raise ValueError("bi_gru requires a non-empty sequence")
    fwd = _gru_direction(xs, forward_params, reverse=False)
    bwd = _gru_direction(xs, backward_params, reverse=True)
    rows = [ad.concat([f, b], axis=1) for f, b in zip(fwd, bwd)]
    return ad.concat(rows, axis=0)


def gru_param_shapes(input_dim: int, hidden_dim: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for gate in ("z", "r", "h"):
        shapes[f"w{gate}"] = (input_dim, hidden_dim)
        shapes[f"u{gate}"] = (hidden_dim, hidden_dim)
        shapes[f"b{gate}"] = (hidden_dim,)
    return shapes


# --- gated dilated convolution (pitch axis) ---------------------------------


def dilated_gated_conv1d(
    x: Tensor,
    p: dict[str, Tensor],
    dilation: int,
    condition: Tensor | None = None,
    input_shift: int = 1,
) -> Tensor:
    """Kernel-2 causal convolution along the last axis with a tanh/sigmoid gate.

    `input_shift=1` (the default) keeps strict causality: output position i
    never sees input position i. Stacked hidden layers pass `input_shift=0`;
    the shift applied once at the stack entry then covers the whole stack.
    """
    if dilation < 1 or dilation & (dilation - 1):
        raise ConfigurationError(f"dilation must be a power of two, got {dilation}")
    x0 = ad.shift(x, input_shift, axis=1) if input_shift else x
    prev = ad.shift(x0, dilation, axis=1)

    filt = ad.add(ad.add(ad.matmul(p["wf_curr"], x0), ad.matmul(p["wf_prev"], prev)), p["bf"])
    gate = ad.add(ad.add(ad.matmul(p["wg_curr"], x0), ad.matmul(p["wg_prev"], prev)), p["bg"])
    if condition is not None:
        cond = ad.reshape(condition, (-1, 1))
        filt = ad.add(filt, ad.matmul(p["vf"], cond))
        gate = ad.add(gate, ad.matmul(p["vg"], cond))
    return ad.mul(ad.tanh(filt), ad.sigmoid(gate))


def conv_param_shapes(
    in_channels: int, out_channels: int, condition_dim: int | None = None
) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for tap in ("curr", "prev"):
        shapes[f"wf_{tap}"] = (out_channels, in_channels)
        shapes[f"wg_{tap}"] = (out_channels, in_channels)
    shapes["bf"] = (out_channels, 1)
    shapes["bg"] = (out_channels, 1)
    if condition_dim is not None:
        shapes["vf"] = (out_channels, condition_dim)
        shapes["vg"] = (out_channels, condition_dim)
    return shapes


def conv_stack_receptive_field(n_layers: int) -> int:
    """Positions covered by a kernel-2 stack with dilations 1, 2, ..., 2^(n-1)."""
    return 2**n_layers


# --- focal loss --------------------------------------------------------------


def focal_loss_logits(logits: Tensor, targets, config: FocalLossConfig) -> Tensor:
    """Elementwise focal loss computed from logits (numerically stable)."""
    y = np.asarray(targets, dtype=logits.data.dtype)
    if y.shape != logits.shape:
        raise ShapeError(f"targets {y.shape} do not match logits {logits.shape}")
    alpha, gamma = config.alpha_t, config.gamma

    z = logits.data
    p = ad._sigmoid(z)
    u = 1.0 - p
    sp_pos = np.logaddexp(0.0, z)
    sp_neg = np.logaddexp(0.0, -z)
    pos = alpha * u**gamma * sp_neg
    neg = (1.0 - alpha) * p**gamma * sp_pos
    data = y * pos + (1.0 - y) * neg

    def backward(g):
        if logits.requires_grad:
            dpos = alpha * u**gamma * (-gamma * p * sp_neg - u)
            dneg = (1.0 - alpha) * p**gamma * (gamma * u * sp_pos + p)
            logits._accumulate(g * (y * dpos + (1.0 - y) * dneg))

    return ad._result(data, (logits,), backward)


def focal_loss(p, targets, config: FocalLossConfig) -> float:
    """Mean focal loss on the probability interface; p is clamped away from 0/1."""
    p = np.clip(np.asarray(p, dtype=np.float64), config.eps, 1.0 - config.eps)
    y = np.asarray(targets, dtype=np.float64)
    pos = -config.alpha_t * (1.0 - p) ** config.gamma * np.log(p)
    neg = -(1.0 - config.alpha_t) * p**config.gamma * np.log(1.0 - p)
    return float(np.mean(y * pos + (1.0 - y) * neg))


# --- gradient checking --------------------------------------------------------


@dataclass
class GradCheckEntry:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def worst(self) -> GradCheckEntry:
        return max(self.entries, key=lambda e: e.rel_error)


def grad_check(
    fn: Callable[[Sequence[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    tolerance: float = 1e-4,
    h: float = 1e-5,
    max_entries_per_input: int | None = None,
    seed: int = 0,
    names: Sequence[str] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of a scalar function against central differences.

    Large inputs can be spot-checked by sampling `max_entries_per_input`
    coordinates (seeded); small inputs are always swept exhaustively.
    """
    for t in inputs:
        t.zero_grad()
    out = fn(inputs)
    if out.data.size != 1:
        raise ShapeError(f"grad_check needs a scalar output, got shape {out.shape}")
    out.backward()

    rng = np.random.default_rng(seed)
    entries: list[GradCheckEntry] = []
    for slot, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        name = names[slot] if names else f"input{slot}"
        grad = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        n = flat.size
        if max_entries_per_input is not None and n > max_entries_per_input:
            coords = rng.choice(n, size=max_entries_per_input, replace=False)
        else:
            coords = np.arange(n)
        for c in coords:
            original = flat[c]
            with ad.no_grad():
                flat[c] = original + h
                f_plus = fn(inputs).item()
                flat[c] = original - h
                f_minus = fn(inputs).item()
            flat[c] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(grad.reshape(-1)[c])
            denom = max(abs(analytic), abs(numeric), 1e-6)
            rel = abs(analytic - numeric) / denom
            entries.append(
                GradCheckEntry(name, np.unravel_index(int(c), t.shape), analytic, numeric, rel)
            )
    max_rel = max((e.rel_error for e in entries), default=0.0)
    return GradCheckReport(max_rel_error=max_rel, tolerance=tolerance, entries=entries)
