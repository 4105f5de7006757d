"""FPCK checkpoint container plus JSON metadata sidecar.

Layout (little endian)::

    b"FPCK" | u32 version | u32 n_records
    per record, names sorted:
        u32 name_len | utf-8 name | u32 rank | u32 dims[rank] | f32 values
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .tensor import ModelParameters, Tensor

MAGIC = b"FPCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_state(path, state: dict[str, np.ndarray]) -> None:
    out = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        enc = name.encode("utf-8")
        out.append(struct.pack("<I", len(enc)) + enc)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    Path(path).write_bytes(b"".join(out))


def read_state(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an FPCK checkpoint")
    version, n = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    state = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<I", raw, pos)
        name = raw[pos + 4 : pos + 4 + ln].decode("utf-8")
        pos += 4 + ln
        (rank,) = struct.unpack_from("<I", raw, pos)
        dims = struct.unpack_from(f"<{rank}I", raw, pos + 4)
        pos += 4 + 4 * rank
        count = int(np.prod(dims)) if rank else 1
        state[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float32)
        pos += 4 * count
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return state


def save_checkpoint(path, params: ModelParameters, meta: dict | None = None) -> None:
    write_state(path, params.state())
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_meta(path) -> dict:
    side = sidecar_path(path)
    if not side.is_file():
        raise CheckpointError(f"{path}: missing metadata sidecar {side.name}")
    return json.loads(side.read_text())


def params_from_state(state: dict[str, np.ndarray]) -> ModelParameters:
    p = ModelParameters()
    for name, arr in state.items():
        if ".running_" in name:
            p.add_buffer(name, arr.copy())
        else:
            p.add(name, Tensor(arr.copy()))
    return p


def load_into(params: ModelParameters, state: dict[str, np.ndarray], prefix: str = "") -> None:
    """Copy ``state`` entries under ``prefix`` into existing parameters.

    The first name or shape disagreement raises, naming the parameter.
    """
    wanted = {n for n in params.state() if n.startswith(prefix)}
    given = {n for n in state if n.startswith(prefix)}
    for name in sorted(wanted | given):
        if name not in given:
            raise CheckpointError(f"checkpoint lacks parameter {name!r}")
        if name not in wanted:
            raise CheckpointError(f"checkpoint has unexpected parameter {name!r}")
        cur = params.buffers[name] if name in params.buffers else params[name].data
        if cur.shape != state[name].shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: model {cur.shape} vs checkpoint {state[name].shape}"
            )
    for name in sorted(wanted):
        if name in params.buffers:
            params.buffers[name][...] = state[name]
        else:
            params[name].data = state[name].astype(params[name].dtype, copy=True)
