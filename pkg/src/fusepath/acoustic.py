"""Raw-waveform encoder in the Wav2vec 2.0 shape: strided conv stack + transformer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .tensor import ModelParameters, Tensor

DEFAULT_CONV_STACK = ((64, 10, 5), (64, 3, 2), (64, 3, 2), (64, 2, 2), (64, 2, 2))


@dataclass(frozen=True)
class AcousticConfig:
    conv_stack: tuple[tuple[int, int, int], ...] = DEFAULT_CONV_STACK
    n_transformer_blocks: int = 4
    model_dim: int = 64
    n_heads: int = 4
    ffn_dim: int = 128

    def __post_init__(self):
        object.__setattr__(self, "conv_stack", tuple(tuple(int(v) for v in layer) for layer in self.conv_stack))
        if not self.conv_stack:
            raise ValueError("conv_stack must not be empty")
        if self.model_dim % self.n_heads:
            raise ValueError("model_dim must be divisible by n_heads")
        if self.conv_stack[-1][0] != self.model_dim:
            raise ValueError("last conv layer must output model_dim channels")

    @property
    def receptive_field(self) -> int:
        rf, jump = 1, 1
        for _, k, s in self.conv_stack:
            rf += (k - 1) * jump
            jump *= s
        return rf


def output_length(n_samples: int, cfg: AcousticConfig) -> int:
    """Frame count after the conv stack (0 if the input is too short)."""
    length = n_samples
    for _, k, s in cfg.conv_stack:
        length = tn.conv_out_length(length, k, s)
        if length < 1:
            return 0
    return length


def init_params(cfg: AcousticConfig, rng: np.random.Generator, prefix: str = "acoustic.", dtype=np.float32) -> ModelParameters:
    p = ModelParameters()
    c_in = 1
    for i, (c, k, _) in enumerate(cfg.conv_stack):
        p.add(f"{prefix}conv{i}.weight", tn.kaiming_uniform(rng, (c, c_in, k), c_in * k, dtype))
        p.add(f"{prefix}conv{i}.bias", np.zeros(c, dtype))
        p.add(f"{prefix}conv{i}.ln.gamma", np.ones(c, dtype))
        p.add(f"{prefix}conv{i}.ln.beta", np.zeros(c, dtype))
        c_in = c

    d, f = cfg.model_dim, cfg.ffn_dim

    def lin(name, n_in, n_out):
        p.add(f"{name}.weight", tn.kaiming_uniform(rng, (n_in, n_out), n_in, dtype))
        p.add(f"{name}.bias", np.zeros(n_out, dtype))

    for b in range(cfg.n_transformer_blocks):
        blk = f"{prefix}block{b}"
        for ln in ("ln1", "ln2"):
            p.add(f"{blk}.{ln}.gamma", np.ones(d, dtype))
            p.add(f"{blk}.{ln}.beta", np.zeros(d, dtype))
        for proj in ("q", "k", "v", "o"):
            lin(f"{blk}.attn.{proj}", d, d)
        lin(f"{blk}.ffn.fc1", d, f)
        lin(f"{blk}.ffn.fc2", f, d)
    p.add(f"{prefix}final_ln.gamma", np.ones(d, dtype))
    p.add(f"{prefix}final_ln.beta", np.zeros(d, dtype))
    return p


def conv_feature_encoder(wave, params: ModelParameters, cfg: AcousticConfig, prefix: str = "acoustic.") -> Tensor:
    """Waveform (L,) or (B, L) -> (D_w, T_w) or (B, D_w, T_w).

    conv -> layer norm over channels -> relu, per layer.  Valid conv output
    frames only ever see valid input samples, so zero padding of a batch
    cannot leak into them.
    """
    w = np.asarray(wave.data if isinstance(wave, Tensor) else wave)
    single = w.ndim == 1
    if single:
        w = w[None]
    if output_length(w.shape[-1], cfg) < 1:
        raise ValueError(
            f"waveform of {w.shape[-1]} samples is shorter than the receptive field ({cfg.receptive_field})"
        )
    dtype = params[f"{prefix}conv0.weight"].dtype
    if isinstance(wave, Tensor) and wave.dtype == dtype:
        h = tn.reshape(wave, (w.shape[0], 1, w.shape[1]))
    else:
        h = Tensor(np.ascontiguousarray(w[:, None, :], dtype=dtype))
    for i, (_, _, s) in enumerate(cfg.conv_stack):
        h = tn.conv1d(h, params[f"{prefix}conv{i}.weight"], params[f"{prefix}conv{i}.bias"], stride=s)
        h = tn.layer_norm(h, params[f"{prefix}conv{i}.ln.gamma"], params[f"{prefix}conv{i}.ln.beta"], axis=1)
        h = tn.relu(h)
    return tn.reshape(h, h.shape[1:]) if single else h


def positional_encoding(length: int, dim: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(0, dim, 2)[None, :]
    angle = pos / np.power(10000.0, i / dim)
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : dim // 2])
    return pe.astype(dtype)


def multi_head_attention(
    x: Tensor,
    params: ModelParameters,
    name: str,
    n_heads: int,
    key_mask: np.ndarray | None = None,
    attn_out: list | None = None,
) -> Tensor:
    """Self-attention over (B, T, D); ``key_mask`` is (B, T)."""
    b, t, d = x.shape
    dh = d // n_heads

    def heads(proj):
        y = tn.linear(x, params[f"{name}.{proj}.weight"], params[f"{name}.{proj}.bias"])
        return tn.transpose(tn.reshape(y, (b, t, n_heads, dh)), (0, 2, 1, 3))  # (B, H, T, dh)

    q, k, v = heads("q"), heads("k"), heads("v")
    logits = tn.scale(tn.matmul(q, tn.transpose(k)), 1.0 / math.sqrt(dh))
    mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, None, :]
    weights = tn.softmax(logits, axis=-1, mask=mask)
    if attn_out is not None:
        attn_out.append(weights.data)
    ctx = tn.reshape(tn.transpose(tn.matmul(weights, v), (0, 2, 1, 3)), (b, t, d))
    return tn.linear(ctx, params[f"{name}.o.weight"], params[f"{name}.o.bias"])


def transformer_block(
    x: Tensor,
    params: ModelParameters,
    name: str,
    n_heads: int,
    key_mask: np.ndarray | None = None,
    attn_out: list | None = None,
) -> Tensor:
    """Pre-norm block: x + MHSA(LN(x)), then + FFN(LN(.)) with relu.

    Accepts (T, D) or (B, T, D).
    """
    single = x.ndim == 2
    if single:
        x = tn.reshape(x, (1,) + x.shape)
    d = params[f"{name}.ln1.gamma"].shape[0]
    if x.shape[-1] != d:
        raise tn.ShapeError(f"{name}: expected model dim {d}, got {x.shape[-1]}")
    h = tn.layer_norm(x, params[f"{name}.ln1.gamma"], params[f"{name}.ln1.beta"])
    x = tn.add(x, multi_head_attention(h, params, f"{name}.attn", n_heads, key_mask, attn_out))
    h = tn.layer_norm(x, params[f"{name}.ln2.gamma"], params[f"{name}.ln2.beta"])
    h = tn.linear(tn.relu(tn.linear(h, params[f"{name}.ffn.fc1.weight"], params[f"{name}.ffn.fc1.bias"])),
                  params[f"{name}.ffn.fc2.weight"], params[f"{name}.ffn.fc2.bias"])
    x = tn.add(x, h)
    return tn.reshape(x, x.shape[1:]) if single else x


def acoustic_forward(
    wave,
    params: ModelParameters,
    cfg: AcousticConfig,
    train: bool = False,
    lengths=None,
    prefix: str = "acoustic.",
    attn_out: list | None = None,
) -> tuple[Tensor, np.ndarray | None]:
    """Waveform -> h_w.

    ``wave`` is an AudioClip, a 1-D array, or a zero-padded (B, L) array with
    per-clip sample ``lengths``.  Returns (h_w, frame_mask) where h_w is
    (T_w, D_w) for a single clip (mask None) or (B, T_w, D_w) with a (B, T_w)
    validity mask.
    """
    if hasattr(wave, "sample_rate"):
        if wave.sample_rate != 16000:
            raise ValueError(f"acoustic path expects 16 kHz input, got {wave.sample_rate} Hz")
        wave = wave.samples
    w = np.asarray(wave)
    single = w.ndim == 1
    if single:
        w = w[None]
        lengths = None
    h = conv_feature_encoder(w, params, cfg, prefix)  # (B, D, T_w)
    h = tn.transpose(h, (0, 2, 1))
    t_w = h.shape[1]
    mask = None
    if lengths is not None:
        valid = np.array([output_length(int(n), cfg) for n in lengths])
        if valid.min() < 1:
            raise ValueError("a clip in the batch is shorter than the receptive field")
        mask = np.arange(t_w)[None, :] < valid[:, None]
    h = tn.add(h, positional_encoding(t_w, cfg.model_dim, h.dtype))
    for b in range(cfg.n_transformer_blocks):
        h = transformer_block(h, params, f"{prefix}block{b}", cfg.n_heads, mask, attn_out)
    h = tn.layer_norm(h, params[f"{prefix}final_ln.gamma"], params[f"{prefix}final_ln.beta"])
    if single:
        return tn.reshape(h, h.shape[1:]), None
    return h, mask
