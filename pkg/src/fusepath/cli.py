"""fusepath command-line entry point.

Failures print one JSON line ``{"error": <code>, "message": <text>}`` on
stderr and exit non-zero.  ``FUSEPATH_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import checkpoint as ck
from . import training as tr
from .audio import MfccConfig, WavError, cmvn, dump_features, load_wav, mfcc, resample
from .config import ConfigError, RunConfig, from_dict, load_config
from .dataset import ManifestError, SynthSpec, load_manifest, synthesize_corpus
from .metrics import ablation_matrix, evaluate, export_embeddings

log = logging.getLogger("fusepath")

EXIT_CODES = {"config": 2, "data": 3, "checkpoint": 4, "io": 5, "internal": 1}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else from_dict({})
    if getattr(args, "seed", None) is not None:
        cfg.values["seed"] = int(args.seed)
    return cfg


def _out_dir(cfg: RunConfig, args) -> Path:
    out = getattr(args, "out", None) or cfg.get("paths.out_dir")
    if not out:
        raise CliError("config", "no output directory: set paths.out_dir or pass --out")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_corpus(cfg: RunConfig):
    path = cfg.get("paths.manifest")
    if not path:
        raise CliError("config", "no corpus: set paths.manifest")
    manifest = load_manifest(path)
    return manifest, tr.prepare_corpus(manifest, cfg.mfcc())


def _run_meta(cfg: RunConfig, n_classes: int, manifest_path) -> dict:
    resolved = cfg.resolved(n_classes)
    resolved["paths.manifest"] = str(Path(manifest_path).resolve())
    return resolved


def _save(result, out: Path, name: str, stage: str, run_cfg: dict) -> Path:
    path = out / f"{name}.fpck"
    tr.save_result(result, path, stage, run_cfg)
    meta = ck.load_meta(path)
    meta["manifest"] = run_cfg["paths.manifest"]
    ck.sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    tr.write_log(result.log, out / f"{name}.log.jsonl")
    (out / f"{name}.run.json").write_text(json.dumps(run_cfg, indent=2, sort_keys=True) + "\n")
    return path


def _final_loss(result):
    return result.log[-1]["loss"] if result.log else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    spec = SynthSpec()
    if args.spec:
        try:
            spec = SynthSpec.from_dict(json.loads(Path(args.spec).read_text()))
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise CliError("config", f"bad synth spec {args.spec}: {exc}") from None
    if args.seed is not None:
        spec = replace(spec, seed=int(args.seed))
    manifest = synthesize_corpus(spec, args.out)
    print(json.dumps({"clips": len(manifest), "manifest": str(Path(args.out) / "manifest.jsonl")}))
    return 0


def cmd_features(args) -> int:
    clip = load_wav(args.wav)
    if clip.sample_rate != tr.TARGET_RATE:
        clip = resample(clip, tr.TARGET_RATE)
    feat = mfcc(clip, MfccConfig())
    if not args.no_cmvn:
        feat = cmvn(feat)
    d = feat.data
    print(json.dumps({
        "frames": d.shape[0],
        "features": d.shape[1],
        "frame_rate": feat.frame_rate,
        "mean": float(d.mean()),
        "std": float(d.std()),
        "min": float(d.min()),
        "max": float(d.max()),
    }))
    if args.dump:
        dump_features(feat, args.dump)
    return 0


def cmd_train_stage1(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg, args)
    manifest, examples = _load_corpus(cfg)
    n_classes = len(manifest.label_map)
    spec = cfg.model_spec(n_classes)
    tcfg = cfg.train(n_classes)
    fn = tr.stage1_train_tdnn if args.path == "tdnn" else tr.stage1_train_acoustic
    result = fn(examples, spec, tcfg)
    path = _save(result, out, f"stage1_{args.path}", f"stage1_{args.path}",
                 _run_meta(cfg, n_classes, cfg.get("paths.manifest")))
    print(json.dumps({"checkpoint": str(path), "final_loss": _final_loss(result)}))
    return 0


def cmd_train_stage2(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg, args)
    manifest, examples = _load_corpus(cfg)
    n_classes = len(manifest.label_map)
    spec = cfg.model_spec(n_classes)
    try:
        tdnn_state = ck.read_state(args.tdnn_ckpt)
        ac_state = ck.read_state(args.acoustic_ckpt)
    except OSError as exc:
        raise CliError("checkpoint", f"cannot read checkpoint: {exc}") from None
    result = tr.stage2_finetune(examples, tdnn_state, ac_state, spec, cfg.train(n_classes))
    path = _save(result, out, "stage2", "stage2", _run_meta(cfg, n_classes, cfg.get("paths.manifest")))
    print(json.dumps({"checkpoint": str(path), "final_loss": _final_loss(result)}))
    return 0


def cmd_train_e2e(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg, args)
    manifest, examples = _load_corpus(cfg)
    n_classes = len(manifest.label_map)
    result = tr.end_to_end_train(examples, cfg.model_spec(n_classes), cfg.train(n_classes))
    path = _save(result, out, "end_to_end", "end_to_end", _run_meta(cfg, n_classes, cfg.get("paths.manifest")))
    print(json.dumps({"checkpoint": str(path), "final_loss": _final_loss(result)}))
    return 0


def _checkpoint_corpus(args):
    try:
        spec, params = tr.load_model(args.ckpt)
        meta = ck.load_meta(args.ckpt)
    except FileNotFoundError as exc:
        raise CliError("checkpoint", f"cannot read checkpoint: {exc}") from None
    run_path = Path(args.ckpt).with_name(Path(args.ckpt).name.replace(".fpck", ".run.json"))
    run = json.loads(run_path.read_text()) if run_path.is_file() else {}
    manifest_path = args.manifest or meta.get("manifest") or run.get("paths.manifest")
    if not manifest_path:
        raise CliError("config", "checkpoint names no corpus; pass --manifest")
    mf = MfccConfig(**{k[5:]: v for k, v in run.items() if k.startswith("mfcc.")})
    manifest = load_manifest(manifest_path)
    examples = tr.prepare_corpus(manifest, mf)
    split = tr.split_of(examples, args.split)
    if not split:
        raise CliError("data", f"split {args.split!r} is empty")
    return spec, params, split, run


def cmd_eval(args) -> int:
    spec, params, split, run = _checkpoint_corpus(args)
    report = evaluate(spec, params, split, average=args.average or run.get("eval.average", "macro"))
    text = report.to_json()
    sys.stdout.write(text)
    out = Path(args.out) if args.out else Path(args.ckpt).with_name(Path(args.ckpt).stem + f".eval_{args.split}.json")
    out.write_text(text)
    return 0


def cmd_export_emb(args) -> int:
    spec, params, split, _ = _checkpoint_corpus(args)
    try:
        embs = export_embeddings(spec, params, split, args.out)
    except OSError as exc:
        raise CliError("io", str(exc)) from None
    print(json.dumps({"rows": int(embs.shape[0]), "dim": int(embs.shape[1]), "out": str(args.out)}))
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    out = _out_dir(cfg, args)
    manifest, examples = _load_corpus(cfg)
    n_classes = len(manifest.label_map)
    result = ablation_matrix(examples, cfg.model_spec(n_classes), cfg.train(n_classes),
                             split=args.split, average=cfg.get("eval.average", "macro"))
    (out / "ablation.json").write_text(result.to_json())
    (out / "ablation_summary.csv").write_text(result.summary_csv())
    (out / "ablation.run.json").write_text(
        json.dumps(_run_meta(cfg, n_classes, cfg.get("paths.manifest")), indent=2, sort_keys=True) + "\n")
    for cell, records in sorted(result.logs.items()):
        tr.write_log(records, out / f"ablation_{cell.replace('/', '_')}.log.jsonl")
    sys.stdout.write(result.summary_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fusepath", description="Dual-path voice pathology detector.")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic corpus")
    s.add_argument("--spec", help="JSON synth spec (defaults to the 2-class corpus)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("features", help="inspect MFCC features of one WAV")
    s.add_argument("--wav", required=True)
    s.add_argument("--dump", help="write an FMX1 binary feature dump")
    s.add_argument("--no-cmvn", action="store_true")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train-stage1", help="stage 1: train one path with its own head")
    s.add_argument("--path", choices=("tdnn", "acoustic"), required=True)
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train_stage1)

    s = sub.add_parser("train-stage2", help="stage 2: reload both encoders and fine-tune the fused model")
    s.add_argument("--config")
    s.add_argument("--tdnn-ckpt", required=True)
    s.add_argument("--acoustic-ckpt", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_train_stage2)

    s = sub.add_parser("train-e2e", help="train the fused model from scratch")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train_e2e)

    for name, func, help_ in (("eval", cmd_eval, "evaluate a checkpoint"),
                              ("export-emb", cmd_export_emb, "export pooled embeddings as CSV")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--ckpt", required=True)
        s.add_argument("--split", default="test", choices=("train", "val", "test"))
        s.add_argument("--manifest", help="corpus manifest (defaults to the one recorded at training)")
        s.add_argument("--out", required=name == "export-emb")
        if name == "eval":
            s.add_argument("--average", choices=("macro", "micro", "weighted"))
        s.set_defaults(func=func)

    s = sub.add_parser("ablate", help="run the full ablation matrix")
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--split", default="test", choices=("train", "val", "test"))
    s.set_defaults(func=cmd_ablate)
    return p


def _fail(code: str, message: str, key: str | None = None) -> int:
    doc = {"error": code, "message": message}
    if key:
        doc["key"] = key
    sys.stderr.write(json.dumps(doc) + "\n")
    return EXIT_CODES[code]


def main(argv=None) -> int:
    level = os.environ.get("FUSEPATH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.code, str(exc))
    except ConfigError as exc:
        return _fail("config", str(exc), exc.key)
    except (WavError, ManifestError, tr.EmptyCorpusError) as exc:
        return _fail("data", str(exc))
    except ck.CheckpointError as exc:
        return _fail("checkpoint", str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
    except (ValueError, FloatingPointError) as exc:
        return _fail("internal", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
