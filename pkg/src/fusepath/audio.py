"""WAV ingest, resampling and MFCC features."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class WavError(ValueError):
    """Base class for WAV parsing failures; ``field`` names what was wrong."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field


class WavNotFoundError(WavError, FileNotFoundError):
    pass


class WavHeaderError(WavError):
    pass


class WavTruncatedError(WavError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class TooShortError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    label: int = -1
    id: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if np.max(np.abs(s)) > 1 + 1e-6:
            raise ValueError("samples must lie in [-1, 1]")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FeatureMatrix:
    data: np.ndarray  # (T, F)
    frame_rate: float

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"feature matrix must be T x F with T, F >= 1, got {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("feature matrix contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


# ---------------------------------------------------------------------------
# WAV


_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


def load_wav(path, label: int = -1, clip_id: str | None = None) -> AudioClip:
    """Read a PCM16 or float32 RIFF/WAVE file, averaging channels to mono."""
    path = Path(path)
    if not path.is_file():
        raise WavNotFoundError(f"no such file: {path}", field="path")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF":
        raise WavHeaderError(f"{path}: missing RIFF tag", field="riff_id")
    if raw[8:12] != b"WAVE":
        raise WavHeaderError(f"{path}: missing WAVE tag", field="wave_id")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if cid == b"fmt ":
            if size < 16 or body_start + size > len(raw):
                raise WavHeaderError(f"{path}: fmt chunk too short", field="fmt_size")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
            if fmt[0] == _EXTENSIBLE and size >= 40:
                (sub_format,) = struct.unpack_from("<H", raw, body_start + 24)
                fmt = (sub_format,) + fmt[1:]
        elif cid == b"data":
            if body_start + size > len(raw):
                raise WavTruncatedError(
                    f"{path}: data chunk declares {size} bytes but only "
                    f"{len(raw) - body_start} remain",
                    field="data_size",
                )
            data = raw[body_start : body_start + size]
            break
        pos = body_start + size + (size & 1)
    if fmt is None:
        raise WavHeaderError(f"{path}: no fmt chunk", field="fmt")
    if data is None:
        raise WavHeaderError(f"{path}: no data chunk", field="data")

    tag, channels, rate, _, _, bits = fmt
    if channels < 1:
        raise WavHeaderError(f"{path}: channel count {channels}", field="num_channels")
    if rate < 1:
        raise WavHeaderError(f"{path}: sample rate {rate}", field="sample_rate")
    if tag == _PCM and bits == 16:
        x = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        x = np.frombuffer(data[: len(data) // 4 * 4], dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncodingError(
            f"{path}: unsupported encoding (format tag {tag}, {bits} bits)", field="audio_format"
        )
    n = len(x) // channels
    if n == 0:
        raise WavTruncatedError(f"{path}: no complete sample frames", field="data_size")
    x = x[: n * channels].reshape(n, channels).mean(axis=1)
    return AudioClip(np.clip(x, -1.0, 1.0), int(rate), label, clip_id if clip_id is not None else path.stem)


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono 16-bit PCM."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, _PCM, 1, sample_rate, sample_rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(pcm))
    Path(path).write_bytes(header + pcm)


# ---------------------------------------------------------------------------
# resampling


def resample(clip: AudioClip, target_rate: int, zero_crossings: int = 16, beta: float = 8.6) -> AudioClip:
    """Windowed-sinc (Kaiser) band-limited interpolation to ``target_rate``.

    The low-pass cutoff sits at 0.9 of the lower of the two Nyquist rates.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    src = clip.sample_rate
    if src == target_rate:
        return clip
    x = np.asarray(clip.samples, dtype=np.float64)
    n_out = int(round(len(x) * target_rate / src))
    if n_out < 1:
        raise ValueError("resampled clip would be empty")
    cutoff = 0.9 * 0.5 * min(src, target_rate) / src  # cycles per input sample
    half = zero_crossings / (2 * cutoff)  # kernel half-width in input samples
    i0_beta = np.i0(beta)
    y = np.empty(n_out)
    step = src / target_rate
    chunk = 2048
    for start in range(0, n_out, chunk):
        t = np.arange(start, min(start + chunk, n_out)) * step
        lo = np.floor(t - half).astype(np.int64) + 1
        taps = np.arange(int(np.ceil(2 * half)) + 1)
        idx = lo[:, None] + taps[None, :]
        tau = t[:, None] - idx
        inside = (np.abs(tau) <= half) & (idx >= 0) & (idx < len(x))
        r = np.clip(tau / half, -1.0, 1.0)
        w = np.i0(beta * np.sqrt(1.0 - r * r)) / i0_beta
        h = 2 * cutoff * np.sinc(2 * cutoff * tau) * w
        h = np.where(inside, h, 0.0)
        y[start : start + len(t)] = np.sum(h * x[np.clip(idx, 0, len(x) - 1)], axis=1)
    y = np.clip(y, -1.0, 1.0)
    return replace(clip, samples=y, sample_rate=int(target_rate))


# ---------------------------------------------------------------------------
# MFCC


@dataclass(frozen=True)
class MfccConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 512
    n_mels: int = 40
    n_mfcc: int = 20
    f_min: float = 20.0
    f_max: float = 7600.0
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10

    def window_samples(self, sample_rate: int) -> int:
        return int(round(self.window_ms * sample_rate / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(self.hop_ms * sample_rate / 1000.0))

    def validate(self, sample_rate: int = 16000) -> None:
        if self.n_mfcc > self.n_mels:
            raise ValueError("n_mfcc must not exceed n_mels")
        if not (0 <= self.f_min < self.f_max <= sample_rate / 2):
            raise ValueError("need 0 <= f_min < f_max <= sample_rate/2")
        if self.n_fft < self.window_samples(sample_rate):
            raise ValueError("n_fft must be at least the window length")
        if self.hop_samples(sample_rate) < 1:
            raise ValueError("hop must be at least one sample")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    """The n_mels + 2 band edges (Hz), uniformly spaced on the mel scale."""
    return mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))


def mel_filterbank(freqs: np.ndarray, n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    """Triangular filters evaluated at ``freqs`` (Hz); returns (n_mels, len(freqs))."""
    edges = mel_center_frequencies(n_mels, f_min, f_max)
    f = np.asarray(freqs, dtype=np.float64)[None, :]
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (f - lo) / (mid - lo)
    down = (hi - f) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II as an (n, n) matrix acting on column vectors."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    d[0] /= np.sqrt(2.0)
    return d


def frame_count(n_samples: int, win: int, hop: int) -> int:
    return (n_samples - win) // hop + 1


def mfcc(clip: AudioClip, cfg: MfccConfig = MfccConfig()) -> FeatureMatrix:
    sr = clip.sample_rate
    if sr != 16000:
        raise ValueError(f"mfcc expects 16 kHz input, got {sr} Hz")
    cfg.validate(sr)
    win = cfg.window_samples(sr)
    hop = cfg.hop_samples(sr)
    x = np.asarray(clip.samples, dtype=np.float64)
    if len(x) < win:
        raise TooShortError(f"clip has {len(x)} samples, one window needs {win}")

    y = np.empty_like(x)
    y[0] = x[0]
    y[1:] = x[1:] - cfg.pre_emphasis * x[:-1]

    t = frame_count(len(y), win, hop)
    frames = np.lib.stride_tricks.sliding_window_view(y, win)[: (t - 1) * hop + 1 : hop]
    frames = frames * np.hanning(win)
    power = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=1)) ** 2

    freqs = np.fft.rfftfreq(cfg.n_fft, d=1.0 / sr)
    fb = mel_filterbank(freqs, cfg.n_mels, cfg.f_min, cfg.f_max)
    logmel = np.log(np.maximum(power @ fb.T, cfg.log_floor))
    coeffs = logmel @ dct_matrix(cfg.n_mels)[: cfg.n_mfcc].T
    return FeatureMatrix(coeffs, 1000.0 / cfg.hop_ms)


def cmvn(feat: FeatureMatrix, eps: float = 1e-8) -> FeatureMatrix:
    """Per-utterance mean/variance normalisation of each feature column."""
    d = np.asarray(feat.data, dtype=np.float64)
    centred = d - d.mean(axis=0, keepdims=True)
    return FeatureMatrix(centred / (d.std(axis=0, keepdims=True) + eps), feat.frame_rate)


# ---------------------------------------------------------------------------
# feature dump


_FMX_MAGIC = b"FMX1"


def dump_features(feat: FeatureMatrix, path) -> None:
    t, f = feat.shape
    body = np.ascontiguousarray(feat.data, dtype="<f4").tobytes()
    Path(path).write_bytes(_FMX_MAGIC + struct.pack("<IId", t, f, float(feat.frame_rate)) + body)


def load_features(path) -> FeatureMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != _FMX_MAGIC:
        raise ValueError(f"{path}: not an FMX1 feature dump")
    t, f, rate = struct.unpack_from("<IId", raw, 4)
    data = np.frombuffer(raw, dtype="<f4", count=t * f, offset=20).reshape(t, f)
    return FeatureMatrix(data.astype(np.float64), rate)
