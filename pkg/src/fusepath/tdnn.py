"""ECAPA-style front encoder: two Conv1D layers, three SE-ResBlocks, projection.

Everything stays length-preserving so ``h_t`` has one row per MFCC frame.
Batched inputs are (B, C, T) with a (B, T) validity mask; padded frames are
zeroed after every layer so they behave exactly like the zero padding a lone
clip would see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .tensor import ModelParameters, Tensor


@dataclass(frozen=True)
class TdnnConfig:
    in_features: int = 20
    channels: int = 64
    se_bottleneck: int = 16
    dilations: tuple[int, ...] = (2, 3, 4)
    kernel: int = 3
    out_dim: int = 64

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if len(self.dilations) != 3:
            raise ValueError("exactly three SE-ResBlock dilations are required")
        if self.channels < self.se_bottleneck:
            raise ValueError("channels must be >= se_bottleneck")
        if self.kernel % 2 != 1:
            raise ValueError("kernel must be odd for same-length padding")


def param_count(cfg: TdnnConfig) -> int:
    c, i, k, s = cfg.channels, cfg.in_features, cfg.kernel, cfg.se_bottleneck
    conv1 = c * i * 5 + c
    conv2 = c * c * 3 + c
    block = (c * c * k + c) + 2 * c + 2 * c * s
    return conv1 + 2 * c + conv2 + 2 * c + 3 * block + cfg.out_dim * c + cfg.out_dim


def init_params(cfg: TdnnConfig, rng: np.random.Generator, prefix: str = "tdnn.", dtype=np.float32) -> ModelParameters:
    p = ModelParameters()
    c = cfg.channels

    def conv(name, c_out, c_in, k):
        p.add(f"{prefix}{name}.weight", tn.kaiming_uniform(rng, (c_out, c_in, k), c_in * k, dtype))
        p.add(f"{prefix}{name}.bias", np.zeros(c_out, dtype))

    def bn(name, n):
        p.add(f"{prefix}{name}.gamma", np.ones(n, dtype))
        p.add(f"{prefix}{name}.beta", np.zeros(n, dtype))
        p.add_buffer(f"{prefix}{name}.running_mean", np.zeros(n, dtype))
        p.add_buffer(f"{prefix}{name}.running_var", np.ones(n, dtype))

    conv("conv1", c, cfg.in_features, 5)
    bn("bn1", c)
    conv("conv2", c, c, 3)
    bn("bn2", c)
    for b in range(3):
        conv(f"block{b}.conv", c, c, cfg.kernel)
        bn(f"block{b}.bn", c)
        p.add(f"{prefix}block{b}.se.w1", tn.kaiming_uniform(rng, (cfg.se_bottleneck, c), c, dtype))
        p.add(f"{prefix}block{b}.se.w2", tn.kaiming_uniform(rng, (c, cfg.se_bottleneck), cfg.se_bottleneck, dtype))
    conv("proj", cfg.out_dim, c, 1)
    return p


def _masked(x: Tensor, mask: np.ndarray | None) -> Tensor:
    if mask is None:
        return x
    return tn.mul(x, mask.astype(x.dtype)[:, None, :])


def _bn(x: Tensor, params: ModelParameters, name: str, train: bool, mask) -> Tensor:
    return tn.batch_norm_1d(
        x,
        params[f"{name}.gamma"],
        params[f"{name}.beta"],
        params.buffer(f"{name}.running_mean"),
        params.buffer(f"{name}.running_var"),
        train=train,
        mask=mask,
    )


def se_block(x: Tensor, w1: Tensor, w2: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Squeeze-excitation gate: x * sigmoid(w2 relu(w1 mean_T(x))) per channel.

    ``x`` is (C, T) or (B, C, T); ``w1`` is (bottleneck, C), ``w2`` is (C, bottleneck).
    """
    if x.shape[-2] != w1.shape[1] or w2.shape != (w1.shape[1], w1.shape[0]):
        raise tn.ShapeError(f"SE weights {w1.shape}/{w2.shape} do not fit input {x.shape}")
    if mask is None:
        pooled = tn.mean(x, axis=-1, keepdims=True)  # (..., C, 1)
    else:
        pooled = tn.reshape(tn.masked_mean(x, mask[:, None, :], axis=-1), x.shape[:-1] + (1,))
    s = tn.sigmoid(tn.matmul(w2, tn.relu(tn.matmul(w1, pooled))))
    return tn.mul(x, s)


def se_res_block(
    x: Tensor,
    params: ModelParameters,
    name: str,
    dilation: int,
    train: bool,
    mask: np.ndarray | None = None,
) -> Tensor:
    w = params[f"{name}.conv.weight"]
    k = w.shape[-1]
    if x.shape[-2] != w.shape[1]:
        raise tn.ShapeError(f"{name}: expected {w.shape[1]} channels, got {x.shape[-2]}")
    h = tn.conv1d(x, w, params[f"{name}.conv.bias"], dilation=dilation, padding=dilation * (k - 1) // 2)
    h = tn.relu(h)
    h = _masked(h, mask)
    h = _bn(h, params, f"{name}.bn", train, mask)
    h = _masked(h, mask)
    h = se_block(h, params[f"{name}.se.w1"], params[f"{name}.se.w2"], mask)
    return tn.add(x, h)


def tdnn_forward(
    feats,
    params: ModelParameters,
    cfg: TdnnConfig,
    train: bool = False,
    mask: np.ndarray | None = None,
    prefix: str = "tdnn.",
) -> Tensor:
    """MFCC frames -> h_t.

    ``feats`` is a (T, F) array/FeatureMatrix or a batched (B, T, F) array.
    Returns (T, D_t) or (B, T, D_t).
    """
    data = feats.data if hasattr(feats, "frame_rate") else feats
    if isinstance(data, Tensor):
        data = data.data
    data = np.asarray(data)
    single = data.ndim == 2
    if single:
        data = data[None]
        mask = None
    if data.shape[-1] != cfg.in_features:
        raise tn.ShapeError(f"expected {cfg.in_features} features per frame, got {data.shape[-1]}")
    dtype = params[f"{prefix}conv1.weight"].dtype
    x = Tensor(np.ascontiguousarray(data.transpose(0, 2, 1), dtype=dtype))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        x = _masked(x, mask)

    p = prefix
    h = tn.relu(tn.conv1d(x, params[f"{p}conv1.weight"], params[f"{p}conv1.bias"], padding=2))
    h = _masked(h, mask)
    h = _masked(_bn(h, params, f"{p}bn1", train, mask), mask)
    h = tn.relu(tn.conv1d(h, params[f"{p}conv2.weight"], params[f"{p}conv2.bias"], padding=1))
    h = _masked(h, mask)
    h = _masked(_bn(h, params, f"{p}bn2", train, mask), mask)
    for b, d in enumerate(cfg.dilations):
        h = se_res_block(h, params, f"{p}block{b}", d, train, mask)
    h = tn.conv1d(h, params[f"{p}proj.weight"], params[f"{p}proj.bias"])
    h = _masked(h, mask)
    h = tn.transpose(h, (0, 2, 1))
    return tn.reshape(h, h.shape[1:]) if single else h
