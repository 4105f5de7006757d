"""Classification metrics, embedding export and the ablation harness."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .model import ModelSpec
from .tensor import ModelParameters

log = logging.getLogger(__name__)

AVERAGES = ("macro", "micro", "weighted")


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list[dict]
    confusion: list[list[int]]
    average: str = "macro"

    @property
    def total(self) -> int:
        return int(np.sum(self.confusion))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def confusion_matrix(labels, preds, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=int), np.asarray(preds, dtype=int)), 1)
    return cm


def _ratio(num, den) -> float:
    return float(num) / float(den) if den else 0.0


def report_from_confusion(confusion, average: str = "macro") -> MetricsReport:
    """Precision/recall/F1 per class and averaged; undefined ratios count as 0."""
    if average not in AVERAGES:
        raise ValueError(f"unknown averaging mode {average!r}")
    cm = np.asarray(confusion, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    pred_count = cm.sum(axis=0)
    support = cm.sum(axis=1)
    per_class = []
    for c in range(cm.shape[0]):
        p = _ratio(tp[c], pred_count[c])
        r = _ratio(tp[c], support[c])
        per_class.append({"precision": p, "recall": r, "f1": _ratio(2 * p * r, p + r), "support": int(support[c])})

    if average == "micro":
        prec = rec = f1 = _ratio(tp.sum(), total)
    else:
        w = support / total if average == "weighted" else np.full(len(per_class), 1.0 / len(per_class))
        prec = float(sum(wi * pc["precision"] for wi, pc in zip(w, per_class)))
        rec = float(sum(wi * pc["recall"] for wi, pc in zip(w, per_class)))
        f1 = float(sum(wi * pc["f1"] for wi, pc in zip(w, per_class)))
    return MetricsReport(
        accuracy=int(tp.sum()) / total,
        macro_precision=prec,
        macro_recall=rec,
        macro_f1=f1,
        per_class=per_class,
        confusion=cm.tolist(),
        average=average,
    )


def micro_recall(confusion) -> float:
    cm = np.asarray(confusion)
    return float(np.diag(cm).sum() / cm.sum())


def evaluate(spec: ModelSpec, params: ModelParameters, examples, average: str = "macro", batch_size: int = 32) -> MetricsReport:
    from .training import predict

    if not examples:
        raise ValueError("cannot evaluate an empty split")
    _, labels, logits, _ = predict(spec, params, examples, batch_size)
    if logits.shape[1] != spec.head.n_classes:
        raise ValueError("checkpoint head does not match the configured class count")
    preds = np.argmax(logits, axis=1)
    return report_from_confusion(confusion_matrix(labels, preds, spec.head.n_classes), average)


def embeddings_csv(ids, labels, embs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "label"] + [f"v_{i}" for i in range(embs.shape[1])])
    for i, lab, row in zip(ids, labels, embs):
        w.writerow([i, int(lab)] + [repr(float(v)) for v in row])
    return buf.getvalue()


def export_embeddings(spec: ModelSpec, params: ModelParameters, examples, out_path, batch_size: int = 32) -> np.ndarray:
    """Write pooled pre-head embeddings (one CSV row per clip); returns the matrix."""
    from .training import predict

    ids, labels, _, embs = predict(spec, params, examples, batch_size)
    out_path = Path(out_path)
    try:
        out_path.write_text(embeddings_csv(ids, labels, embs))
    except OSError as exc:
        raise OSError(f"cannot write embeddings to {out_path}: {exc.strerror}") from exc
    return embs


# ---------------------------------------------------------------------------
# ablation


SUMMARY_ROWS = (
    ("path", "tdnn_only", "tdnn"),
    ("path", "acoustic_only", "acoustic"),
    ("path", "fusion", "attention/multi_stage"),
    ("fusion_style", "attention", "attention/multi_stage"),
    ("fusion_style", "add", "add/multi_stage"),
    ("fusion_style", "concat", "concat/multi_stage"),
    ("strategy", "multi_stage", "attention/multi_stage"),
    ("strategy", "end_to_end", "attention/end_to_end"),
)

METRIC_KEYS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")


@dataclass
class AblationResult:
    cells: dict[str, MetricsReport]
    summary: list[dict]
    logs: dict[str, list[dict]]

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "row", "cell"] + list(METRIC_KEYS))
        for r in self.summary:
            w.writerow([r["group"], r["row"], r["cell"]] + [f"{r[k]:.6f}" for k in METRIC_KEYS])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"cells": {k: v.to_dict() for k, v in sorted(self.cells.items())}, "summary": self.summary}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def ablation_matrix(examples, spec: ModelSpec, cfg, split: str = "test", average: str = "macro",
                    stage1=None) -> AblationResult:
    """Train every distinct cell once and report the single-path, fusion-style
    and training-strategy comparisons.

    Stage-1 encoders are trained once and shared by every multi-stage cell;
    pass ``stage1=(tdnn_result, acoustic_result)`` to reuse existing ones.
    """
    from . import training as tr

    target = tr.split_of(examples, split)
    cells: dict[str, MetricsReport] = {}
    logs: dict[str, list[dict]] = {}

    if stage1 is None:
        stage1 = (tr.stage1_train_tdnn(examples, spec, cfg), tr.stage1_train_acoustic(examples, spec, cfg))
    r_tdnn, r_ac = stage1
    for name, res in (("tdnn", r_tdnn), ("acoustic", r_ac)):
        full = res.params.merge(res.head.subset("head."))
        cells[name] = evaluate(res.spec, full, target, average)
        logs[name] = res.log

    tdnn_state, ac_state = r_tdnn.params.state(), r_ac.params.state()
    for style in ("attention", "add", "concat"):
        c = replace(cfg, fusion_style=style, strategy="multi_stage")
        res = tr.stage2_finetune(examples, tdnn_state, ac_state, spec, c)
        key = f"{style}/multi_stage"
        cells[key] = evaluate(res.spec, res.params, target, average)
        logs[key] = r_tdnn.log + r_ac.log + res.log
        log.info("ablation %s accuracy %.3f", key, cells[key].accuracy)

    c = replace(cfg, fusion_style="attention", strategy="end_to_end")
    res = tr.end_to_end_train(examples, spec, c)
    cells["attention/end_to_end"] = evaluate(res.spec, res.params, target, average)
    logs["attention/end_to_end"] = res.log

    summary = []
    for group, row, cell in SUMMARY_ROWS:
        rep = cells[cell]
        summary.append({"group": group, "row": row, "cell": cell, **{k: getattr(rep, k) for k in METRIC_KEYS}})
    return AblationResult(cells=cells, summary=summary, logs=logs)
