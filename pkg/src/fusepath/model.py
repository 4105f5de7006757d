"""Model assembly: single-path classifiers and the fused dual-path classifier."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import acoustic, fusion, tdnn
from . import tensor as tn
from .acoustic import AcousticConfig
from .fusion import HeadConfig
from .tdnn import TdnnConfig
from .tensor import ModelParameters, Tensor

KINDS = ("tdnn", "acoustic", "fusion")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "fusion"
    fusion_style: str = "attention"
    tdnn: TdnnConfig = field(default_factory=TdnnConfig)
    acoustic: AcousticConfig = field(default_factory=AcousticConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    fusion_dim: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.fusion_style not in fusion.FUSION_STYLES:
            raise ValueError(f"unknown fusion style {self.fusion_style!r}")

    @property
    def embedding_dim(self) -> int:
        if self.kind == "tdnn":
            return self.tdnn.out_dim
        if self.kind == "acoustic":
            return self.acoustic.model_dim
        return fusion.fused_dim(self.fusion_style, self.tdnn.out_dim, self.acoustic.model_dim)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            kind=d["kind"],
            fusion_style=d["fusion_style"],
            tdnn=TdnnConfig(**d["tdnn"]),
            acoustic=AcousticConfig(**d["acoustic"]),
            head=HeadConfig(**d["head"]),
            fusion_dim=d.get("fusion_dim"),
        )


@dataclass
class Batch:
    ids: list[str]
    labels: np.ndarray  # (B,)
    feats: np.ndarray  # (B, T, F) zero padded
    feat_mask: np.ndarray  # (B, T) bool
    wave: np.ndarray  # (B, L) zero padded
    wave_lengths: np.ndarray  # (B,)

    def __len__(self) -> int:
        return len(self.ids)


def init_encoder(kind: str, spec: ModelSpec, seed: int, dtype=np.float32) -> ModelParameters:
    if kind == "tdnn":
        return tdnn.init_params(spec.tdnn, tn.rng_stream(seed, "init/tdnn"), dtype=dtype)
    if kind == "acoustic":
        return acoustic.init_params(spec.acoustic, tn.rng_stream(seed, "init/acoustic"), dtype=dtype)
    raise ValueError(f"no encoder named {kind!r}")


def init_model(spec: ModelSpec, seed: int, dtype=np.float32) -> ModelParameters:
    """Fresh parameters for every component of ``spec``."""
    head_rng = tn.rng_stream(seed, f"init/head/{spec.kind}/{spec.fusion_style}")
    if spec.kind != "fusion":
        enc = init_encoder(spec.kind, spec, seed, dtype)
        return enc.merge(fusion.init_head_params(spec.embedding_dim, spec.head, head_rng, dtype=dtype))
    params = init_encoder("tdnn", spec, seed, dtype).merge(init_encoder("acoustic", spec, seed, dtype))
    return params.merge(init_fusion_and_head(spec, seed, dtype))


def init_fusion_and_head(spec: ModelSpec, seed: int, dtype=np.float32) -> ModelParameters:
    fus = fusion.init_fusion_params(
        spec.fusion_style, spec.tdnn.out_dim, spec.acoustic.model_dim,
        tn.rng_stream(seed, f"init/fusion/{spec.fusion_style}"), spec.fusion_dim, dtype=dtype,
    )
    head = fusion.init_head_params(
        spec.embedding_dim, spec.head, tn.rng_stream(seed, f"init/head/{spec.kind}/{spec.fusion_style}"), dtype=dtype
    )
    return fus.merge(head)


def embed(spec: ModelSpec, params: ModelParameters, batch: Batch, train: bool = False) -> Tensor:
    """Pooled pre-head embedding, (B, embedding_dim)."""
    if spec.kind == "tdnn":
        h_t = tdnn.tdnn_forward(batch.feats, params, spec.tdnn, train, batch.feat_mask)
        return fusion.pool(h_t, batch.feat_mask)
    h_w, w_mask = acoustic.acoustic_forward(batch.wave, params, spec.acoustic, train, batch.wave_lengths)
    if spec.kind == "acoustic":
        return fusion.pool(h_w, w_mask)

    h_t = tdnn.tdnn_forward(batch.feats, params, spec.tdnn, train, batch.feat_mask)
    align = fusion.batch_alignment(
        batch.feat_mask.sum(axis=1), w_mask.sum(axis=1), h_t.shape[1], h_w.shape[1], h_w.dtype
    )
    h_w = tn.matmul(Tensor(align), h_w)
    h = fusion.fuse(spec.fusion_style, h_t, h_w, params, key_mask=batch.feat_mask)
    return fusion.pool(h, batch.feat_mask)


def forward(spec: ModelSpec, params: ModelParameters, batch: Batch, train: bool = False) -> tuple[Tensor, Tensor]:
    """Returns (logits (B, C), pooled embedding (B, F))."""
    pooled = embed(spec, params, batch, train)
    return fusion.head_logits(pooled, params), pooled
