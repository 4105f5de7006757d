"""Two-stage and end-to-end training loops, batching and corpus preparation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint as ck
from . import tensor as tn
from .audio import AudioClip, MfccConfig, cmvn, load_wav, mfcc, resample
from .dataset import Manifest
from .model import Batch, ModelSpec, forward, init_encoder, init_fusion_and_head, init_model
from .fusion import init_head_params
from .tensor import AdamState, ModelParameters

log = logging.getLogger(__name__)

TARGET_RATE = 16000


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs_stage1: int = 30
    epochs_stage2: int = 20
    epochs_e2e: int = 30
    lr_tdnn_stage1: float = 1e-5
    lr_acoustic_stage1: float = 1e-4
    lr_stage2: float = 1e-5
    lr_e2e: float = 1e-4
    seed: int = 0
    fusion_style: str = "attention"
    strategy: str = "multi_stage"
    n_classes: int = 2

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for name in ("lr_tdnn_stage1", "lr_acoustic_stage1", "lr_stage2", "lr_e2e"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.strategy not in ("multi_stage", "end_to_end"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass
class Example:
    id: str
    label: int
    split: str
    wave: np.ndarray  # float32, 16 kHz
    feats: np.ndarray  # (T, n_mfcc) float32, CMVN applied


class EmptyCorpusError(ValueError):
    pass


def featurize(clip: AudioClip, mfcc_cfg: MfccConfig) -> tuple[np.ndarray, np.ndarray]:
    if clip.sample_rate != TARGET_RATE:
        clip = resample(clip, TARGET_RATE)
    feats = cmvn(mfcc(clip, mfcc_cfg)).data
    return np.asarray(clip.samples, dtype=np.float32), feats.astype(np.float32)


def prepare_corpus(manifest: Manifest, mfcc_cfg: MfccConfig = MfccConfig()) -> list[Example]:
    out = []
    for entry in manifest.entries:
        label = manifest.label_map[entry.label]
        clip = load_wav(manifest.resolve(entry), label=label, clip_id=entry.path)
        wave, feats = featurize(clip, mfcc_cfg)
        out.append(Example(entry.path, label, entry.split, wave, feats))
    return out


def split_of(examples: list[Example], name: str) -> list[Example]:
    return [e for e in examples if e.split == name]


def collate(items: list[Example]) -> Batch:
    t_max = max(e.feats.shape[0] for e in items)
    l_max = max(len(e.wave) for e in items)
    n_feat = items[0].feats.shape[1]
    feats = np.zeros((len(items), t_max, n_feat), dtype=np.float32)
    mask = np.zeros((len(items), t_max), dtype=bool)
    wave = np.zeros((len(items), l_max), dtype=np.float32)
    for i, e in enumerate(items):
        t = e.feats.shape[0]
        feats[i, :t] = e.feats
        mask[i, :t] = True
        wave[i, : len(e.wave)] = e.wave
    return Batch(
        ids=[e.id for e in items],
        labels=np.array([e.label for e in items], dtype=np.int64),
        feats=feats,
        feat_mask=mask,
        wave=wave,
        wave_lengths=np.array([len(e.wave) for e in items]),
    )


def make_batches(examples: list[Example], batch_size: int, seed: int, epoch: int) -> list[Batch]:
    """Shuffle keyed by (seed, epoch), then pad each batch to its longest clip."""
    if not examples:
        raise EmptyCorpusError("cannot batch an empty corpus")
    rng = np.random.default_rng([int(seed), 0x0DA7A, int(epoch)])
    order = rng.permutation(len(examples))
    return [collate([examples[i] for i in order[s : s + batch_size]]) for s in range(0, len(order), batch_size)]


def eval_batches(examples: list[Example], batch_size: int) -> list[Batch]:
    items = sorted(examples, key=lambda e: e.id)
    return [collate(items[s : s + batch_size]) for s in range(0, len(items), batch_size)]


# ---------------------------------------------------------------------------
# loop


@dataclass
class TrainResult:
    params: ModelParameters
    log: list[dict] = field(default_factory=list)
    spec: ModelSpec | None = None
    head: ModelParameters | None = None


def _check_labels(examples: list[Example], n_classes: int) -> None:
    if not examples:
        raise EmptyCorpusError("training split is empty")
    bad = [e.id for e in examples if not 0 <= e.label < n_classes]
    if bad:
        raise ValueError(f"label out of range [0, {n_classes}) for clip {bad[0]!r}")


def predict(spec: ModelSpec, params: ModelParameters, examples: list[Example], batch_size: int = 32):
    """Eval-mode pass in clip-id order: (ids, labels, logits, embeddings)."""
    ids, labels, logits, embs = [], [], [], []
    with tn.no_grad():
        for batch in eval_batches(examples, batch_size):
            lg, pooled = forward(spec, params, batch, train=False)
            ids += batch.ids
            labels.append(batch.labels)
            logits.append(lg.data)
            embs.append(pooled.data)
    return ids, np.concatenate(labels), np.concatenate(logits), np.concatenate(embs)


def dataset_loss(spec, params, examples, batch_size: int = 32) -> float:
    _, labels, logits, _ = predict(spec, params, examples, batch_size)
    return float(tn.cross_entropy(tn.Tensor(logits.astype(np.float64)), labels).data)


def accuracy(spec, params, examples, batch_size: int = 32) -> float:
    if not examples:
        return float("nan")
    _, labels, logits, _ = predict(spec, params, examples, batch_size)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def run_epochs(
    spec: ModelSpec,
    params: ModelParameters,
    train: list[Example],
    val: list[Example],
    lr: float,
    epochs: int,
    cfg: TrainConfig,
    stage: str,
) -> list[dict]:
    state = AdamState(params, lr=lr)
    params.zero_grad()
    records = []
    for epoch in range(epochs):
        t0 = time.perf_counter()
        losses, correct, seen = [], 0, 0
        for batch in make_batches(train, cfg.batch_size, cfg.seed, epoch):
            logits, _ = forward(spec, params, batch, train=True)
            loss = tn.cross_entropy(logits, batch.labels)
            tn.backward(loss)
            tn.adam_step(params, state)
            losses.append(float(loss.data))
            correct += int(np.sum(np.argmax(logits.data, axis=1) == batch.labels))
            seen += len(batch)
        rec = {
            "stage": stage,
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "train_acc": correct / seen,
            "val_acc": accuracy(spec, params, val, cfg.batch_size) if val else None,
            "wall_time": round(time.perf_counter() - t0, 3),
        }
        if not np.isfinite(rec["loss"]):
            raise tn.NonFiniteError(f"{stage}: non-finite loss at epoch {epoch}")
        log.info("%s epoch %d loss %.4f train_acc %.3f val_acc %s", stage, epoch, rec["loss"],
                 rec["train_acc"], rec["val_acc"])
        records.append(rec)
    return records


def _stage1(path: str, examples: list[Example], spec: ModelSpec, cfg: TrainConfig, lr: float) -> TrainResult:
    train, val = split_of(examples, "train"), split_of(examples, "val")
    _check_labels(train, spec.head.n_classes)
    spec = replace(spec, kind=path)
    enc = init_encoder(path, spec, cfg.seed)
    head = init_head_params(spec.embedding_dim, spec.head, tn.rng_stream(cfg.seed, f"init/head/{path}/stage1"))
    params = enc.merge(head)
    records = run_epochs(spec, params, train, val, lr, cfg.epochs_stage1, cfg, f"stage1_{path}")
    return TrainResult(params=enc, log=records, spec=spec, head=head)


def stage1_train_tdnn(examples: list[Example], spec: ModelSpec, cfg: TrainConfig) -> TrainResult:
    """Fit the TDNN path with its own throwaway head (CE on pooled h_t)."""
    return _stage1("tdnn", examples, spec, cfg, cfg.lr_tdnn_stage1)


def stage1_train_acoustic(examples: list[Example], spec: ModelSpec, cfg: TrainConfig) -> TrainResult:
    """Fit the acoustic path with its own throwaway head (CE on pooled h_w)."""
    return _stage1("acoustic", examples, spec, cfg, cfg.lr_acoustic_stage1)


def stage2_init(spec: ModelSpec, tdnn_state: dict, acoustic_state: dict, seed: int) -> ModelParameters:
    """Fused model whose encoders are copied from the stage-1 checkpoints."""
    spec = replace(spec, kind="fusion")
    params = init_encoder("tdnn", spec, seed).merge(init_encoder("acoustic", spec, seed))
    ck.load_into(params, {k: v for k, v in tdnn_state.items() if k.startswith("tdnn.")}, prefix="tdnn.")
    ck.load_into(params, {k: v for k, v in acoustic_state.items() if k.startswith("acoustic.")}, prefix="acoustic.")
    return params.merge(init_fusion_and_head(spec, seed))


def stage2_finetune(
    examples: list[Example],
    tdnn_state: dict,
    acoustic_state: dict,
    spec: ModelSpec,
    cfg: TrainConfig,
) -> TrainResult:
    """Reload both encoders, attach fresh fusion + head, fine-tune everything."""
    train, val = split_of(examples, "train"), split_of(examples, "val")
    _check_labels(train, spec.head.n_classes)
    spec = replace(spec, kind="fusion", fusion_style=cfg.fusion_style)
    params = stage2_init(spec, tdnn_state, acoustic_state, cfg.seed)
    init_loss = dataset_loss(spec, params, val or train, cfg.batch_size)
    records = [{"stage": "stage2_init", "epoch": -1, "loss": init_loss}]
    records += run_epochs(spec, params, train, val, cfg.lr_stage2, cfg.epochs_stage2, cfg, "stage2")
    return TrainResult(params=params, log=records, spec=spec)


def end_to_end_train(examples: list[Example], spec: ModelSpec, cfg: TrainConfig) -> TrainResult:
    """Train the whole fused model from scratch in one stage."""
    train, val = split_of(examples, "train"), split_of(examples, "val")
    _check_labels(train, spec.head.n_classes)
    spec = replace(spec, kind="fusion", fusion_style=cfg.fusion_style)
    params = init_model(spec, cfg.seed)
    records = run_epochs(spec, params, train, val, cfg.lr_e2e, cfg.epochs_e2e, cfg, "end_to_end")
    return TrainResult(params=params, log=records, spec=spec)


# ---------------------------------------------------------------------------
# persistence


def write_log(records: list[dict], path) -> None:
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def read_log(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def checkpoint_meta(spec: ModelSpec, stage: str, epoch: int, run_config: dict) -> dict:
    return {
        "config_hash": ck.config_hash(run_config),
        "stage": stage,
        "epoch": epoch,
        "model": spec.to_dict(),
    }


def save_result(result: TrainResult, path, stage: str, run_config: dict) -> None:
    epochs = [r["epoch"] for r in result.log if r["epoch"] >= 0]
    last = max(epochs) + 1 if epochs else 0
    ck.save_checkpoint(path, result.params, checkpoint_meta(result.spec, stage, last, run_config))
    if result.head is not None:
        head_path = Path(path).with_suffix(".head.fpck")
        ck.save_checkpoint(head_path, result.head, checkpoint_meta(result.spec, stage + "_head", last, run_config))


def load_model(path) -> tuple[ModelSpec, ModelParameters]:
    """Full classifier (encoder(s) + head) from a checkpoint and its sidecar."""
    meta = ck.load_meta(path)
    spec = ModelSpec.from_dict(meta["model"])
    state = ck.read_state(path)
    head_path = Path(path).with_suffix(".head.fpck")
    if not any(k.startswith("head.") for k in state) and head_path.is_file():
        state.update(ck.read_state(head_path))
    params = init_model(spec, 0)
    ck.load_into(params, state)
    return spec, params


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
