"""Corpus manifests and a synthetic pathological-voice generator.

A manifest is JSON-lines, one ``{"path", "label", "split"}`` object per line.
Relative paths resolve against the manifest's directory.

The generator renders vowel-like clips from a glottal pulse train whose
per-cycle period (jitter) and amplitude (shimmer) are perturbed, shapes
them with two formant resonators and adds white noise at a class SNR.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import write_wav

SPLITS = ("train", "val", "test")


class ManifestError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    label_map: dict[str, int]
    root: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Manifest)
            and self.entries == other.entries
            and self.label_map == other.label_map
        )


def load_manifest(path) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(rec, dict):
            raise ManifestError("entry must be a JSON object", lineno)
        for key in ("path", "label", "split"):
            if key not in rec:
                raise ManifestError(f"missing key {key!r}", lineno)
        if rec["split"] not in SPLITS:
            raise ManifestError(f"unknown split tag {rec['split']!r}", lineno)
        p = str(rec["path"])
        if p in seen:
            raise ManifestError(f"duplicate path {p!r} (first seen on line {seen[p]})", lineno)
        seen[p] = lineno
        entries.append(ManifestEntry(p, str(rec["label"]), rec["split"]))
    if not entries:
        raise ManifestError(f"empty manifest: {path}")
    labels = sorted({e.label for e in entries})
    return Manifest(entries, {lab: i for i, lab in enumerate(labels)}, path.parent)


def write_manifest(manifest: Manifest, path) -> None:
    lines = [json.dumps({"path": e.path, "label": e.label, "split": e.split}) for e in manifest.entries]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class VoiceProfile:
    name: str
    f0_range: tuple[float, float] = (100.0, 180.0)
    jitter_pct: float = 0.2
    shimmer_pct: float = 1.0
    snr_db: float = 30.0
    duration_range: tuple[float, float] = (0.4, 0.6)


HEALTHY = VoiceProfile("healthy", jitter_pct=0.2, shimmer_pct=1.0, snr_db=30.0)
DISORDERED = VoiceProfile("disordered", jitter_pct=3.0, shimmer_pct=8.0, snr_db=10.0)

FOUR_CLASS = (
    VoiceProfile("healthy_like", jitter_pct=0.2, shimmer_pct=1.0, snr_db=30.0),
    VoiceProfile("rough", jitter_pct=3.0, shimmer_pct=2.0, snr_db=25.0),
    VoiceProfile("breathy", jitter_pct=0.5, shimmer_pct=2.0, snr_db=8.0),
    VoiceProfile("unstable", jitter_pct=1.5, shimmer_pct=10.0, snr_db=15.0),
)


@dataclass(frozen=True)
class SynthSpec:
    n_per_class: int = 100
    classes: tuple[VoiceProfile, ...] = (HEALTHY, DISORDERED)
    sample_rate: int = 16000
    seed: int = 0

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("need at least two classes")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be positive")
        for c in self.classes:
            lo, hi = c.f0_range
            dlo, dhi = c.duration_range
            if not (0 < lo <= hi < self.sample_rate / 4):
                raise ValueError(f"{c.name}: bad f0 range {c.f0_range}")
            if not (0 < dlo <= dhi):
                raise ValueError(f"{c.name}: bad duration range {c.duration_range}")
            if c.jitter_pct < 0 or c.shimmer_pct < 0:
                raise ValueError(f"{c.name}: jitter/shimmer must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        classes = d.get("classes")
        if classes is None:
            profiles = (HEALTHY, DISORDERED)
        elif classes == "four_class":
            profiles = FOUR_CLASS
        else:
            profiles = tuple(
                VoiceProfile(**{k: tuple(v) if isinstance(v, list) else v for k, v in c.items()}) for c in classes
            )
        return cls(
            n_per_class=int(d.get("n_per_class", 100)),
            classes=profiles,
            sample_rate=int(d.get("sample_rate", 16000)),
            seed=int(d.get("seed", 0)),
        )


def _rosenberg(phase: np.ndarray, open_q: float = 0.4, close_q: float = 0.16) -> np.ndarray:
    """Rosenberg glottal flow over one cycle, ``phase`` in [0, 1)."""
    out = np.zeros_like(phase)
    rising = phase < open_q
    out[rising] = 0.5 * (1 - np.cos(np.pi * phase[rising] / open_q))
    falling = (phase >= open_q) & (phase < open_q + close_q)
    out[falling] = np.cos(0.5 * np.pi * (phase[falling] - open_q) / close_q)
    return out


def _resonator(freq: float, bw: float, sr: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a  # unity gain at DC


def synthesize_clip(profile: VoiceProfile, rng: np.random.Generator, sample_rate: int = 16000) -> np.ndarray:
    sr = sample_rate
    n = int(round(rng.uniform(*profile.duration_range) * sr))
    f0 = rng.uniform(*profile.f0_range)
    period = sr / f0

    # iid relative perturbations; E|p_i - p_{i+1}| / mean(p) equals the stated percentage
    n_cycles = int(np.ceil(n / period)) + 4
    jit = profile.jitter_pct / 100.0 * np.sqrt(np.pi) / 2
    periods = period * (1 + jit * rng.standard_normal(n_cycles))
    periods = np.maximum(periods, 0.5 * period)
    shim = profile.shimmer_pct / 100.0 * np.sqrt(np.pi) / 2
    amps = np.maximum(1 + shim * rng.standard_normal(n_cycles), 0.1)

    onsets = np.concatenate([[0.0], np.cumsum(periods)]) - rng.uniform(0, period)
    t = np.arange(n, dtype=np.float64)
    cyc = np.searchsorted(onsets, t, side="right") - 1
    phase = (t - onsets[cyc]) / periods[cyc]
    flow = amps[cyc] * _rosenberg(phase)
    source = np.diff(flow, prepend=0.0)  # lip radiation

    f1 = rng.uniform(650, 800)
    f2 = rng.uniform(1100, 1300)
    voiced = source
    for freq, bw in ((f1, 80.0), (f2, 100.0)):
        b, a = _resonator(freq, bw, sr)
        voiced = lfilter(b, a, voiced)
    voiced = voiced / (np.sqrt(np.mean(voiced**2)) + 1e-12)
    noise = rng.standard_normal(n) * 10 ** (-profile.snr_db / 20.0)
    x = voiced + noise
    x = 0.9 * x / np.max(np.abs(x))
    return np.clip(x, -1.0, 1.0)


def _hash_key(seed: int, cls: int, idx: int) -> str:
    return hashlib.sha256(f"{seed}:{cls}:{idx}".encode()).hexdigest()


def split_assignments(n: int, keys: list[str], fractions=(0.8, 0.1, 0.1)) -> list[str]:
    """Assign ``n`` items to train/val/test in the given proportions.

    Items are ordered by their hash key, then cut at the cumulative
    fractions, so counts are exact to within one item.
    """
    order = sorted(range(n), key=lambda i: keys[i])
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    out = [""] * n
    for rank, i in enumerate(order):
        out[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return out


def synthesize_corpus(spec: SynthSpec, out_dir) -> Manifest:
    """Render every clip to ``out_dir`` and write ``manifest.jsonl`` beside them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for ci, profile in enumerate(spec.classes):
        keys = [_hash_key(spec.seed, ci, i) for i in range(spec.n_per_class)]
        splits = split_assignments(spec.n_per_class, keys)
        for i in range(spec.n_per_class):
            rng = np.random.default_rng([spec.seed, ci, i])
            x = synthesize_clip(profile, rng, spec.sample_rate)
            name = f"{profile.name}_{i:04d}.wav"
            write_wav(out / name, x, spec.sample_rate)
            entries.append(ManifestEntry(name, profile.name, splits[i]))
    labels = sorted({p.name for p in spec.classes})
    manifest = Manifest(entries, {lab: i for i, lab in enumerate(labels)}, out)
    write_manifest(manifest, out / "manifest.jsonl")
    return manifest
