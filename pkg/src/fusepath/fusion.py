"""Frame-level fusion of the TDNN and acoustic embeddings, plus the MLP head.

Attentive fusion projects h_t to queries and h_w to keys, turns the scaled
query-key products into row-stochastic frame scores and uses them to
re-weight h_t.  The re-weighted sequence is concatenated with h_w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .tensor import ModelParameters, Tensor

FUSION_STYLES = ("attention", "add", "concat")


@dataclass(frozen=True)
class HeadConfig:
    hidden: int = 128
    n_classes: int = 2

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")


@dataclass
class FusedEmbedding:
    h_f: Tensor
    h_r: Tensor
    scores: Tensor


def interpolation_matrix(t_out: int, t_in: int) -> np.ndarray:
    """(t_out, t_in) linear-interpolation weights, frame centres aligned, ends clamped."""
    a = np.zeros((t_out, t_in))
    pos = np.clip((np.arange(t_out) + 0.5) * t_in / t_out - 0.5, 0.0, t_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, t_in - 1)
    frac = pos - lo
    rows = np.arange(t_out)
    a[rows, lo] += 1.0 - frac
    a[rows, hi] += frac
    return a


def align_temporal(h_t, h_w):
    """Resample h_w along time to h_t's frame count; h_t is returned untouched."""
    t_t, t_w = h_t.shape[0], h_w.shape[0]
    if t_t < 1 or t_w < 1:
        raise ValueError("both sequences need at least one frame")
    if t_w == t_t:
        return h_t, h_w
    a = interpolation_matrix(t_t, t_w)
    if isinstance(h_w, Tensor):
        return h_t, tn.matmul(Tensor(a.astype(h_w.dtype)), h_w)
    return h_t, a @ np.asarray(h_w)


def batch_alignment(t_lengths, w_lengths, t_max: int, w_max: int, dtype=np.float32) -> np.ndarray:
    """Per-clip interpolation matrices stacked to (B, t_max, w_max); padded rows are zero."""
    out = np.zeros((len(t_lengths), t_max, w_max), dtype=dtype)
    for i, (tt, tw) in enumerate(zip(t_lengths, w_lengths)):
        out[i, :tt, :tw] = np.eye(tt) if tt == tw else interpolation_matrix(int(tt), int(tw))
    return out


def init_fusion_params(
    style: str,
    d_t: int,
    d_w: int,
    rng: np.random.Generator,
    dim: int | None = None,
    prefix: str = "fusion.",
    dtype=np.float32,
) -> ModelParameters:
    p = ModelParameters()
    if style == "attention":
        dim = dim or d_t
        p.add(f"{prefix}W_q", tn.kaiming_uniform(rng, (d_t, dim), d_t, dtype))
        p.add(f"{prefix}b_q", np.zeros(dim, dtype))
        p.add(f"{prefix}W_k", tn.kaiming_uniform(rng, (d_w, dim), d_w, dtype))
        p.add(f"{prefix}b_k", np.zeros(dim, dtype))
    elif style == "add":
        if d_t != d_w:
            p.add(f"{prefix}proj.weight", tn.kaiming_uniform(rng, (d_w, d_t), d_w, dtype))
            p.add(f"{prefix}proj.bias", np.zeros(d_t, dtype))
    elif style != "concat":
        raise ValueError(f"unknown fusion style {style!r}")
    return p


def fused_dim(style: str, d_t: int, d_w: int) -> int:
    return d_t if style == "add" else d_t + d_w


def attentive_fuse(
    h_t: Tensor,
    h_w: Tensor,
    W_q: Tensor,
    b_q: Tensor,
    W_k: Tensor,
    b_k: Tensor,
    key_mask: np.ndarray | None = None,
) -> FusedEmbedding:
    """q = h_t W_q + b_q, k = h_w W_k + b_k, scores = softmax(q k^T / sqrt(D)),
    h_f = scores h_t, h_r = [h_f, h_w].

    Works on (T, D) or batched (B, T, D) inputs; ``key_mask`` (B, T) removes
    padded frames from the softmax.
    """
    h_t, h_w = tn.as_tensor(h_t), tn.as_tensor(h_w)
    if h_t.shape[-2] != h_w.shape[-2]:
        raise tn.ShapeError(f"temporal lengths differ: {h_t.shape} vs {h_w.shape}; align first")
    if W_q.shape[0] != h_t.shape[-1] or W_k.shape[0] != h_w.shape[-1]:
        raise tn.ShapeError("projection input sizes do not match the embeddings")
    if W_q.shape[1] != W_k.shape[1]:
        raise tn.ShapeError("W_q and W_k must share the fusion dimension")
    d = W_q.shape[1]
    q = tn.linear(h_t, W_q, b_q)
    k = tn.linear(h_w, W_k, b_k)
    logits = tn.scale(tn.matmul(q, tn.transpose(k)), 1.0 / math.sqrt(d))
    mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, :]
    scores = tn.softmax(logits, axis=-1, mask=mask)
    h_f = tn.matmul(scores, h_t)
    return FusedEmbedding(h_f=h_f, h_r=tn.concat([h_f, h_w], axis=-1), scores=scores)


def add_fuse(h_t: Tensor, h_w: Tensor, proj_w: Tensor | None = None, proj_b: Tensor | None = None) -> Tensor:
    """h_t + h_w, mapping h_w into h_t's width first when they differ."""
    h_t, h_w = tn.as_tensor(h_t), tn.as_tensor(h_w)
    if h_t.shape[:-1] != h_w.shape[:-1]:
        raise tn.ShapeError(f"temporal lengths differ: {h_t.shape} vs {h_w.shape}")
    if proj_w is not None:
        h_w = tn.linear(h_w, proj_w, proj_b)
    if h_t.shape[-1] != h_w.shape[-1]:
        raise tn.ShapeError("add fusion needs matching widths or a projection")
    return tn.add(h_t, h_w)


def concat_fuse(h_t: Tensor, h_w: Tensor) -> Tensor:
    h_t, h_w = tn.as_tensor(h_t), tn.as_tensor(h_w)
    if h_t.shape[:-1] != h_w.shape[:-1]:
        raise tn.ShapeError(f"temporal lengths differ: {h_t.shape} vs {h_w.shape}")
    return tn.concat([h_t, h_w], axis=-1)


def fuse(style: str, h_t: Tensor, h_w: Tensor, params: ModelParameters, key_mask=None, prefix: str = "fusion.") -> Tensor:
    if style == "attention":
        return attentive_fuse(
            h_t, h_w, params[f"{prefix}W_q"], params[f"{prefix}b_q"],
            params[f"{prefix}W_k"], params[f"{prefix}b_k"], key_mask,
        ).h_r
    if style == "add":
        if f"{prefix}proj.weight" in params:
            return add_fuse(h_t, h_w, params[f"{prefix}proj.weight"], params[f"{prefix}proj.bias"])
        return add_fuse(h_t, h_w)
    if style == "concat":
        return concat_fuse(h_t, h_w)
    raise ValueError(f"unknown fusion style {style!r}")


# ---------------------------------------------------------------------------
# classification head


def init_head_params(in_dim: int, cfg: HeadConfig, rng: np.random.Generator, prefix: str = "head.", dtype=np.float32) -> ModelParameters:
    p = ModelParameters()
    p.add(f"{prefix}fc1.weight", tn.kaiming_uniform(rng, (in_dim, cfg.hidden), in_dim, dtype))
    p.add(f"{prefix}fc1.bias", np.zeros(cfg.hidden, dtype))
    # small output layer: a fresh head starts near uniform logits (loss near ln C)
    p.add(f"{prefix}fc2.weight", tn.kaiming_uniform(rng, (cfg.hidden, cfg.n_classes), cfg.hidden, dtype, gain=0.1))
    p.add(f"{prefix}fc2.bias", np.zeros(cfg.n_classes, dtype))
    return p


def pool(h: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Global average over time: (T, F) -> (F,), (B, T, F) -> (B, F)."""
    if mask is None:
        return tn.mean(h, axis=-2)
    return tn.masked_mean(h, np.asarray(mask)[:, :, None], axis=1)


def head_logits(pooled: Tensor, params: ModelParameters, prefix: str = "head.") -> Tensor:
    z = tn.relu(tn.linear(pooled, params[f"{prefix}fc1.weight"], params[f"{prefix}fc1.bias"]))
    return tn.linear(z, params[f"{prefix}fc2.weight"], params[f"{prefix}fc2.bias"])


def classify_head(h: Tensor, params: ModelParameters, mask: np.ndarray | None = None, prefix: str = "head.") -> Tensor:
    """Average-pool over time then F -> hidden -> n_classes; returns raw logits."""
    return head_logits(pool(tn.as_tensor(h), mask), params, prefix)
