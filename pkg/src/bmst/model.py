"""The bidirectional music language model.

Two Transformer encoders look at the past and the future halves of a score
window (the current column is present but replaced by a learned mask vector),
each followed by a bi-GRU and a shared head that predicts frame/onset/offset
planes at the masked positions. The two current-position states are fused
into a conditioning vector for a gated dilated-convolution stack that models
the joint pitch distribution of the current column autoregressively, from
low pitch to high.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kernels import (
    AttentionConfig,
    ConfigurationError,
    FocalLossConfig,
    bi_gru,
    conv_param_shapes,
    conv_stack_receptive_field,
    dilated_gated_conv1d,
    focal_loss_logits,
    gru_param_shapes,
    linear,
    pre_layer_norm,
    relative_self_attention,
)
from .params import ParameterStore
from .score import MetadataPlanes, PianoRoll

N_METADATA = 4
N_PITCH_CODE_BITS = 7


@dataclass(frozen=True)
class BmstConfig:
    context_len: int = 257  # past (or future) context including the current column
    model_dim: int = 180
    heads: int = 4
    encoder_layers: int = 4
    ff_dim: int = 0  # 0 -> 4 * model_dim
    gru_layers: int = 1
    gru_hidden: int = 0  # 0 -> model_dim // 2
    cvar_layers: int = 7
    cvar_kernel: int = 2
    cvar_channels: int = 32
    condition_dim: int = 0  # 0 -> model_dim
    pitches: int = 84
    mask_rate: float = 0.30
    cvar_loss_weight: float = 0.5
    focal: FocalLossConfig = field(default_factory=FocalLossConfig)
    embed_dim: int = 0  # 0 -> model_dim
    allow_partial_receptive_field: bool = False

    def __post_init__(self) -> None:
        if self.context_len < 2:
            raise ConfigurationError(f"context_len must be >= 2, got {self.context_len}")
        if not 0.0 <= self.mask_rate < 1.0:
            raise ConfigurationError(f"mask_rate must be in [0, 1), got {self.mask_rate}")
        if self.cvar_loss_weight < 0.0:
            raise ConfigurationError("cvar_loss_weight must be >= 0")
        if self.cvar_kernel != 2:
            raise ConfigurationError("only kernel size 2 is supported in the pitch stack")
        if self.gru_layers < 1:
            raise ConfigurationError("at least one recurrent layer is required")
        if self.model_dim % self.heads:
            raise ConfigurationError(f"model_dim {self.model_dim} not divisible by {self.heads} heads")
        coverage = conv_stack_receptive_field(self.cvar_layers)
        if coverage < self.pitches and not self.allow_partial_receptive_field:
            raise ConfigurationError(
                f"{self.cvar_layers} conv layers cover {coverage} pitches < {self.pitches}; "
                "add layers or set allow_partial_receptive_field"
            )

    @property
    def window_len(self) -> int:
        return 2 * (self.context_len - 1) + 1

    @property
    def current_index(self) -> int:
        return self.context_len - 1

    @property
    def ff_width(self) -> int:
        return self.ff_dim or 4 * self.model_dim

    @property
    def gru_width(self) -> int:
        return self.gru_hidden or self.model_dim // 2

    @property
    def cond_width(self) -> int:
        return self.condition_dim or self.model_dim

    @property
    def embed_width(self) -> int:
        return self.embed_dim or self.model_dim

    @property
    def attention(self) -> AttentionConfig:
        return AttentionConfig(self.model_dim, self.heads, self.context_len)


TINY_CONFIG = BmstConfig(
    context_len=9,
    model_dim=16,
    heads=2,
    encoder_layers=2,
    ff_dim=32,
    gru_hidden=8,
    cvar_layers=7,
    cvar_channels=16,
    condition_dim=16,
    embed_dim=12,
)


def pitch_position_codes(n_pitches: int) -> np.ndarray:
    """7-bit binary code per pitch, most significant bit first (7 x n)."""
    if n_pitches > 2**N_PITCH_CODE_BITS:
        raise ConfigurationError(f"{n_pitches} pitches exceed a {N_PITCH_CODE_BITS}-bit code")
    codes = np.zeros((N_PITCH_CODE_BITS, n_pitches))
    for p in range(n_pitches):
        for k, bit in enumerate(format(p, f"0{N_PITCH_CODE_BITS}b")):
            codes[k, p] = int(bit)
    return codes


@dataclass(frozen=True)
class MaskPattern:
    masked_timesteps: frozenset[int]
    current_index: int

    def masked_for(self, columns: range) -> list[int]:
        """Window columns of one direction that carry the mask embedding."""
        hidden = set(self.masked_timesteps) | {self.current_index}
        return sorted(c for c in hidden if c in columns)


def sample_mask(config: BmstConfig, rng: np.random.Generator) -> MaskPattern:
    count = round(config.mask_rate * config.window_len)
    picks = rng.choice(config.window_len, size=count, replace=False) if count else []
    return MaskPattern(frozenset(int(p) for p in picks), config.current_index)


@dataclass
class DirectionOutputs:
    positions: list[int]  # window column indices carrying predictions
    frame_logits: Tensor  # (len(positions), pitches)
    onset_logits: Tensor
    offset_logits: Tensor


@dataclass
class ModelOutputs:
    forward: DirectionOutputs
    backward: DirectionOutputs
    condition: Tensor  # (1, condition_dim)
    cvar_logits: Tensor  # (pitches,)


@dataclass
class TrainingWindow:
    """A window_len-wide slice of a piece, zero-padded at the edges."""

    activations: np.ndarray  # (pitches, window_len)
    onsets: np.ndarray
    offsets: np.ndarray
    metadata: np.ndarray  # (4, window_len)


def extract_window(
    roll: PianoRoll, metadata: MetadataPlanes, center: int, config: BmstConfig
) -> TrainingWindow:
    half = config.context_len - 1
    width = config.window_len
    piece_len = roll.length_ticks
    lo, hi = center - half, center + half + 1
    src_lo, src_hi = max(lo, 0), min(hi, piece_len)
    dst_lo = src_lo - lo

    planes = {}
    for name in ("activations", "onsets", "offsets"):
        plane = np.zeros((config.pitches, width))
        src = getattr(roll, name)[: config.pitches, src_lo:src_hi]
        plane[:, dst_lo : dst_lo + src.shape[1]] = src
        planes[name] = plane
    meta = np.zeros((N_METADATA, width))
    meta[:, dst_lo : dst_lo + (src_hi - src_lo)] = metadata.as_matrix()[:, src_lo:src_hi]
    return TrainingWindow(metadata=meta, **planes)


# --- parameter initialization -------------------------------------------------


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[-1]
    scale = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.standard_normal(shape) * scale


def init_params(config: BmstConfig, seed: int = 0) -> ParameterStore:
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    d, e = config.model_dim, config.embed_width
    h, cond = config.gru_width, config.cond_width
    c = config.cvar_channels
    n = config.pitches

    store.add("embed.w", _glorot(rng, (n, e)))
    store.add("embed.b", np.zeros(e))
    store.add("mask_embed", rng.standard_normal(e) * 0.02)
    store.add("input_proj.w", _glorot(rng, (e + N_METADATA, d)))
    store.add("input_proj.b", np.zeros(d))

    for direction in ("fwd", "bwd"):
        for layer in range(config.encoder_layers):
            base = f"{direction}.enc{layer}"
            for name in ("wq", "wk", "wv", "wo"):
                store.add(f"{base}.attn.{name}", _glorot(rng, (d, d)))
            store.add(f"{base}.attn.bias", np.zeros(2 * config.context_len - 1))
            for ln in ("ln1", "ln2"):
                store.add(f"{base}.{ln}.gain", np.ones(d))
                store.add(f"{base}.{ln}.bias", np.zeros(d))
            store.add(f"{base}.ff.w1", _glorot(rng, (d, config.ff_width)))
            store.add(f"{base}.ff.b1", np.zeros(config.ff_width))
            store.add(f"{base}.ff.w2", _glorot(rng, (config.ff_width, d)))
            store.add(f"{base}.ff.b2", np.zeros(d))
        store.add(f"{direction}.final_ln.gain", np.ones(d))
        store.add(f"{direction}.final_ln.bias", np.zeros(d))
        width_in = d
        for layer in range(config.gru_layers):
            for sub in ("f", "b"):
                for name, shape in gru_param_shapes(width_in, h).items():
                    init = np.zeros(shape) if name.startswith("b") else _glorot(rng, shape)
                    store.add(f"{direction}.gru{layer}.{sub}.{name}", init)
            width_in = 2 * h

    store.add("head.w", _glorot(rng, (2 * h, 3 * n)))
    store.add("head.b", np.zeros(3 * n))
    store.add("cond.w", _glorot(rng, (4 * h, cond)))
    store.add("cond.b", np.zeros(cond))

    in_ch = 1 + N_PITCH_CODE_BITS
    for layer in range(config.cvar_layers):
        cond_dim = cond if layer == 0 else None
        for name, shape in conv_param_shapes(in_ch, c, cond_dim).items():
            init = np.zeros(shape) if name.startswith("b") else _glorot(rng, shape)
            store.add(f"cvar.layer{layer}.{name}", init)
        in_ch = c
    store.add("cvar.out1.w", _glorot(rng, (c, c)))
    store.add("cvar.out1.b", np.zeros((c, 1)))
    store.add("cvar.out2.w", _glorot(rng, (1, c)))
    store.add("cvar.out2.b", np.zeros((1, 1)))
    return store


# --- forward components ---------------------------------------------------------


def embed_window(window_activations: np.ndarray, metadata: np.ndarray, store: ParameterStore) -> Tensor:
    """Per-column embedding: shared pitch-channel embedding summed, metadata appended.

    Returns (window_len, embed_dim + 4); every column of the 84-channel one-hot
    stack passes through the same linear layer, so a silent column still
    contributes the bias once per channel.
    """
    acts = np.asarray(window_activations, dtype=float)
    n_pitches = store["embed.w"].shape[0]
    if acts.shape[0] != n_pitches:
        raise ad.ShapeError(f"window has {acts.shape[0]} pitch rows, embedding expects {n_pitches}")
    summed = ad.add(ad.matmul(Tensor(acts.T), store["embed.w"]), ad.mul(store["embed.b"], float(n_pitches)))
    return ad.concat([summed, Tensor(np.asarray(metadata, dtype=float).T)], axis=1)


def _encoder(x: Tensor, store: ParameterStore, config: BmstConfig, direction: str) -> Tensor:
    attn_cfg = config.attention
    for layer in range(config.encoder_layers):
        base = f"{direction}.enc{layer}"
        normed = pre_layer_norm(x, store[f"{base}.ln1.gain"], store[f"{base}.ln1.bias"])
        x = ad.add(
            x,
            relative_self_attention(
                normed,
                store[f"{base}.attn.wq"],
                store[f"{base}.attn.wk"],
                store[f"{base}.attn.wv"],
                store[f"{base}.attn.wo"],
                store[f"{base}.attn.bias"],
                attn_cfg,
            ),
        )
        normed = pre_layer_norm(x, store[f"{base}.ln2.gain"], store[f"{base}.ln2.bias"])
        hidden = ad.relu(linear(normed, store[f"{base}.ff.w1"], store[f"{base}.ff.b1"]))
        x = ad.add(x, linear(hidden, store[f"{base}.ff.w2"], store[f"{base}.ff.b2"]))
    x = pre_layer_norm(x, store[f"{direction}.final_ln.gain"], store[f"{direction}.final_ln.bias"])
    for layer in range(config.gru_layers):
        x = bi_gru(
            x,
            store.group(f"{direction}.gru{layer}.f"),
            store.group(f"{direction}.gru{layer}.b"),
        )
    return x


def _direction_pass(
    features: Tensor,
    columns: list[int],
    mask_columns: list[int],
    predicted: list[int],
    direction: str,
    store: ParameterStore,
    config: BmstConfig,
) -> tuple[DirectionOutputs, Tensor]:
    """Run one direction over `columns` (already ordered as the sequence)."""
    e = config.embed_width
    length = len(columns)
    col_to_seq = {col: i for i, col in enumerate(columns)}

    mask_flag = np.zeros((length, 1))
    for col in mask_columns:
        mask_flag[col_to_seq[col], 0] = 1.0
    rows = features[np.asarray(columns, dtype=np.intp), :]
    embed_part = rows[:, :e]
    meta_part = rows[:, e:]
    masked_embed = ad.add(
        ad.mul(embed_part, Tensor(1.0 - mask_flag)),
        ad.mul(ad.reshape(store["mask_embed"], (1, e)), Tensor(mask_flag)),
    )
    x = linear(ad.concat([masked_embed, meta_part], axis=1), store["input_proj.w"], store["input_proj.b"])
    states = _encoder(x, store, config, direction)

    pred_seq = np.asarray([col_to_seq[c] for c in predicted], dtype=np.intp)
    logits = linear(states[pred_seq, :], store["head.w"], store["head.b"])
    n = config.pitches
    outputs = DirectionOutputs(
        positions=predicted,
        frame_logits=logits[:, 0 * n : 1 * n],
        onset_logits=logits[:, 1 * n : 2 * n],
        offset_logits=logits[:, 2 * n : 3 * n],
    )
    current_state = states[len(columns) - 1 : len(columns), :]
    return outputs, current_state


def forward_pass(
    window: TrainingWindow, mask: MaskPattern, store: ParameterStore, config: BmstConfig
) -> ModelOutputs:
    c = config.current_index
    j = config.window_len
    if window.activations.shape != (config.pitches, j):
        raise ad.ShapeError(
            f"window shape {window.activations.shape} != ({config.pitches}, {j})"
        )
    features = embed_window(window.activations, window.metadata, store)

    fwd_columns = list(range(0, c + 1))
    bwd_columns = list(range(j - 1, c - 1, -1))
    fwd_masked = mask.masked_for(range(0, c + 1))
    bwd_masked = mask.masked_for(range(c, j))
    fwd_predicted = sorted(set(fwd_masked) | {c})
    bwd_predicted = sorted(set(bwd_masked) | {c})

    fwd_out, fwd_state = _direction_pass(
        features, fwd_columns, fwd_masked, fwd_predicted, "fwd", store, config
    )
    bwd_out, bwd_state = _direction_pass(
        features, bwd_columns, bwd_masked, bwd_predicted, "bwd", store, config
    )

    condition = linear(ad.concat([fwd_state, bwd_state], axis=1), store["cond.w"], store["cond.b"])
    cvar = cvar_logits(condition, window.activations[:, c], store, config)
    return ModelOutputs(fwd_out, bwd_out, condition, cvar)


# --- the autoregressive pitch head ----------------------------------------------


def cvar_logits(
    condition: Tensor, column: np.ndarray, store: ParameterStore, config: BmstConfig
) -> Tensor:
    """Logit of P(pitch i active | pitches < i, condition) for every i.

    The truth channel is shifted up one pitch before entering the stack so
    position i only ever sees pitches below it; the 7-bit pitch codes stay
    aligned with the position they describe.
    """
    n = config.pitches
    column = np.asarray(column, dtype=float).reshape(1, n)
    codes = pitch_position_codes(n)
    x = ad.concat([ad.shift(Tensor(column), 1, axis=1), Tensor(codes)], axis=0)

    cond_vec = ad.reshape(condition, (-1,))
    for layer in range(config.cvar_layers):
        p = store.group(f"cvar.layer{layer}")
        out = dilated_gated_conv1d(
            x,
            p,
            dilation=2**layer,
            condition=cond_vec if layer == 0 else None,
            input_shift=0,
        )
        x = ad.add(x, out) if layer > 0 else out
    x = ad.relu(ad.add(ad.matmul(store["cvar.out1.w"], x), store["cvar.out1.b"]))
    x = ad.add(ad.matmul(store["cvar.out2.w"], x), store["cvar.out2.b"])
    return ad.reshape(x, (n,))


def cvar_forward(
    condition: Tensor, column: np.ndarray, store: ParameterStore, config: BmstConfig
) -> np.ndarray:
    """Teacher-forced pitch probabilities for one column."""
    with ad.no_grad():
        return ad.sigmoid(cvar_logits(condition, column, store, config)).data


# --- loss ------------------------------------------------------------------------


@dataclass
class LossBreakdown:
    forward_term: float
    backward_term: float
    cvar_term: float
    total: float


def _direction_loss(out: DirectionOutputs, window: TrainingWindow, config: BmstConfig) -> Tensor:
    pos = np.asarray(out.positions, dtype=np.intp)
    pieces = []
    for logits, plane in (
        (out.frame_logits, window.activations),
        (out.onset_logits, window.onsets),
        (out.offset_logits, window.offsets),
    ):
        targets = plane[:, pos].T
        pieces.append(ad.reshape(focal_loss_logits(logits, targets, config.focal), (-1,)))
    return ad.tmean(ad.concat(pieces, axis=0))


def compute_loss(
    outputs: ModelOutputs, window: TrainingWindow, config: BmstConfig
) -> tuple[Tensor, LossBreakdown]:
    fwd = _direction_loss(outputs.forward, window, config)
    bwd = _direction_loss(outputs.backward, window, config)
    current = window.activations[:, config.current_index]
    cvar = ad.tmean(focal_loss_logits(outputs.cvar_logits, current, config.focal))
    total = ad.add(ad.add(fwd, bwd), ad.mul(cvar, config.cvar_loss_weight))
    breakdown = LossBreakdown(fwd.item(), bwd.item(), cvar.item(), total.item())
    for name, value in (("forward", fwd), ("backward", bwd), ("pitch-head", cvar)):
        if not np.isfinite(value.item()):
            raise FloatingPointError(f"non-finite {name} loss term")
    return total, breakdown


# --- inference -------------------------------------------------------------------


@dataclass
class CurrentPrediction:
    column: np.ndarray  # decoded binary column (pitches,)
    frame_probs: np.ndarray  # P(active | decided lower pitches)
    onset_forward: np.ndarray
    onset_backward: np.ndarray


def predict_current(
    window: TrainingWindow,
    store: ParameterStore,
    config: BmstConfig,
    *,
    decode: str = "threshold",
    threshold: float = 0.5,
    rng: np.random.Generator | None = None,
    clamp: dict[int, int] | None = None,
    teacher_column: np.ndarray | None = None,
    probs_for_clamped: bool = True,
) -> CurrentPrediction:
    """Predict the window's current column.

    `teacher_column` switches to teacher forcing (one pass, probabilities
    conditioned on the given ground truth). Otherwise the column is decoded
    sequentially from low pitch to high, `clamp` pinning individual pitches.
    `probs_for_clamped=False` skips the model evaluation at clamped pitches
    (their probability is reported as 0), which speeds up sparse resampling.
    """
    if decode not in ("threshold", "sample"):
        raise ValueError(f"unknown decode policy {decode!r}")
    if decode == "sample" and rng is None:
        raise ValueError("sampling decode needs an rng")

    with ad.no_grad():
        mask = MaskPattern(frozenset(), config.current_index)
        outputs = forward_pass(window, mask, store, config)
        fwd_row = outputs.forward.positions.index(config.current_index)
        bwd_row = outputs.backward.positions.index(config.current_index)
        onset_fwd = ad.sigmoid(outputs.forward.onset_logits[fwd_row, :]).data
        onset_bwd = ad.sigmoid(outputs.backward.onset_logits[bwd_row, :]).data

        if teacher_column is not None:
            probs = ad.sigmoid(
                cvar_logits(outputs.condition, teacher_column, store, config)
            ).data.copy()
            column = (probs >= threshold).astype(np.uint8)
        else:
            n = config.pitches
            column = np.zeros(n, dtype=np.uint8)
            probs = np.zeros(n)
            for i in range(n):
                clamped = clamp is not None and i in clamp
                if clamped and not probs_for_clamped:
                    column[i] = clamp[i]
                    continue
                logits = cvar_logits(outputs.condition, column, store, config)
                p = float(ad.sigmoid(logits[i : i + 1]).item())
                probs[i] = p
                if clamped:
                    column[i] = clamp[i]
                elif decode == "sample":
                    column[i] = 1 if rng.random() < p else 0
                else:
                    column[i] = 1 if p >= threshold else 0

    return CurrentPrediction(column, probs, onset_fwd, onset_bwd)


# --- config files ------------------------------------------------------------------


def write_config(config: BmstConfig, path: str | Path) -> None:
    lines = []
    for f in fields(BmstConfig):
        value = getattr(config, f.name)
        if f.name == "focal":
            lines.append(f"focal.alpha_t = {value.alpha_t}")
            lines.append(f"focal.gamma = {value.gamma}")
        else:
            lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_config(path: str | Path) -> BmstConfig:
    values: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    kwargs: dict[str, object] = {}
    focal_kwargs: dict[str, float] = {}
    for f in fields(BmstConfig):
        if f.name == "focal":
            continue
        if f.name in values:
            raw_value = values[f.name]
            if f.type == "bool" or isinstance(f.default, bool):
                kwargs[f.name] = raw_value == "True"
            elif isinstance(f.default, float):
                kwargs[f.name] = float(raw_value)
            else:
                kwargs[f.name] = int(raw_value)
    for key in ("alpha_t", "gamma"):
        if f"focal.{key}" in values:
            focal_kwargs[key] = float(values[f"focal.{key}"])
    if focal_kwargs:
        kwargs["focal"] = FocalLossConfig(**focal_kwargs)
    return BmstConfig(**kwargs)
