"""Run configuration: a flat JSON object with dotted section keys.

Example::

    {"paths.manifest": "corpus/manifest.jsonl", "paths.out_dir": "runs/a",
     "train.batch_size": 16, "acoustic.n_transformer_blocks": 4, "seed": 3}
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .acoustic import AcousticConfig
from .audio import MfccConfig
from .fusion import HeadConfig
from .model import ModelSpec
from .tdnn import TdnnConfig
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


_SECTIONS = {
    "mfcc": MfccConfig,
    "tdnn": TdnnConfig,
    "acoustic": AcousticConfig,
    "head": HeadConfig,
    "train": TrainConfig,
}
# derived from other sections, never set directly
_DERIVED = {"tdnn.in_features", "head.n_classes", "train.n_classes", "train.seed"}
_PATH_KEYS = {"paths.manifest", "paths.out_dir"}
_TOP_KEYS = {"seed", "n_classes", "fusion.dim", "eval.average", "eval.batch_size"}

# desk-scale values that differ from the dataclass defaults
DESK_DEFAULTS = {"train.batch_size": 16, "train.lr_tdnn_stage1": 1e-4}


def known_keys() -> set[str]:
    keys = set(_PATH_KEYS) | _TOP_KEYS
    for sec, cls in _SECTIONS.items():
        keys |= {f"{sec}.{f.name}" for f in dataclasses.fields(cls)}
    return keys - _DERIVED


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source: Path | None = None

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return int(self.values.get("seed", 0))

    def section(self, name: str) -> dict:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def mfcc(self) -> MfccConfig:
        return MfccConfig(**self.section("mfcc"))

    def train(self, n_classes: int | None = None) -> TrainConfig:
        kw = self.section("train")
        kw["seed"] = self.seed
        kw["n_classes"] = int(self.values.get("n_classes") or n_classes or 2)
        return TrainConfig(**kw)

    def model_spec(self, n_classes: int | None = None, kind: str = "fusion") -> ModelSpec:
        mf = self.mfcc()
        ac = self.section("acoustic")
        if "conv_stack" in ac:
            ac["conv_stack"] = tuple(tuple(x) for x in ac["conv_stack"])
        tr = self.train(n_classes)
        return ModelSpec(
            kind=kind,
            fusion_style=tr.fusion_style,
            tdnn=TdnnConfig(in_features=mf.n_mfcc, **self.section("tdnn")),
            acoustic=AcousticConfig(**ac),
            head=HeadConfig(n_classes=tr.n_classes, **self.section("head")),
            fusion_dim=self.values.get("fusion.dim"),
        )

    def resolved(self, n_classes: int | None = None) -> dict:
        """Every setting with defaults filled in, as a flat dotted dict."""
        out = {}
        for sec, obj in (("mfcc", self.mfcc()), ("train", self.train(n_classes))):
            out.update({f"{sec}.{k}": v for k, v in dataclasses.asdict(obj).items()})
        spec = self.model_spec(n_classes)
        for sec in ("tdnn", "acoustic", "head"):
            out.update({f"{sec}.{k}": v for k, v in dataclasses.asdict(getattr(spec, sec)).items()})
        out["acoustic.conv_stack"] = [list(x) for x in spec.acoustic.conv_stack]
        out["tdnn.dilations"] = list(spec.tdnn.dilations)
        for k in sorted(_PATH_KEYS | _TOP_KEYS):
            if k in self.values:
                out[k] = self.values[k]
        out["seed"] = self.seed
        return dict(sorted(out.items()))

    def write_resolved(self, path, n_classes: int | None = None) -> None:
        Path(path).write_text(json.dumps(self.resolved(n_classes), indent=2, sort_keys=True) + "\n")


def from_dict(values: dict, source: Path | None = None) -> RunConfig:
    known = known_keys()
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}", key)
    merged = dict(DESK_DEFAULTS)
    merged.update(values)
    cfg = RunConfig(merged, source)
    try:
        cfg.resolved()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        values = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(values, dict):
        raise ConfigError(f"{path}: top level must be an object")
    cfg = from_dict(values, path)
    for key in _PATH_KEYS:
        if key in cfg.values and not Path(cfg.values[key]).is_absolute():
            cfg.values[key] = str((path.parent / cfg.values[key]).resolve())
    return cfg
