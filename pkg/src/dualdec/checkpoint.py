"""Named-array checkpoint container with a key=value sidecar.

Binary layout (all integers little-endian):
    magic "DDCK0001"
    u32 record count
    records:
        u32 name length, utf-8 name, u8 kind
        kind 0 (array): u32 rank, u64 dims..., raw little-endian float64 data
        kind 1 (alias): u32 target-name length, utf-8 target name
Tied arrays appear once under their canonical name; aliases reference it.
The sidecar `<path>.meta` carries the model config (and any extra keys)
as `key=value` lines.
"""

from __future__ import annotations

import struct
from dataclasses import fields
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams
from .tensor import Tensor

MAGIC = b"DDCK0001"
_ARRAY, _ALIAS = 0, 1


class CheckpointError(IOError):
    """Malformed or mismatched checkpoint container."""


def _write_name(f, name: str):
    raw = name.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_name(f) -> str:
    (n,) = struct.unpack("<I", f.read(4))
    return f.read(n).decode("utf-8")


def save_arrays(path, arrays: dict[str, np.ndarray], aliases: dict[str, str] | None = None):
    aliases = aliases or {}
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(arrays) + len(aliases)))
        for name, arr in arrays.items():
            _write_name(f, name)
            f.write(struct.pack("<B", _ARRAY))
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<Q", d))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        for alias, target in aliases.items():
            if target not in arrays:
                raise CheckpointError(f"alias {alias!r} targets unknown array {target!r}")
            _write_name(f, alias)
            f.write(struct.pack("<B", _ALIAS))
            _write_name(f, target)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    arrays: dict[str, np.ndarray] = {}
    aliases: dict[str, str] = {}
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint container")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            name = _read_name(f)
            (kind,) = struct.unpack("<B", f.read(1))
            if kind == _ARRAY:
                (rank,) = struct.unpack("<I", f.read(4))
                dims = struct.unpack(f"<{rank}Q", f.read(8 * rank)) if rank else ()
                n = int(np.prod(dims)) if dims else 1
                raw = f.read(8 * n)
                if len(raw) != 8 * n:
                    raise CheckpointError(f"{path}: truncated data for {name!r}")
                arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
            elif kind == _ALIAS:
                aliases[name] = _read_name(f)
            else:
                raise CheckpointError(f"{path}: unknown record kind {kind}")
    for alias, target in aliases.items():
        if target not in arrays:
            raise CheckpointError(f"{path}: alias {alias!r} -> missing {target!r}")
    return arrays, aliases


def write_sidecar(path, config: ModelConfig, extra: dict[str, str] | None = None):
    lines = [f"{f.name}={getattr(config, f.name)}" for f in fields(config)]
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    Path(str(path) + ".meta").write_text("\n".join(lines) + "\n")


def read_sidecar(path) -> tuple[ModelConfig, dict[str, str]]:
    meta = Path(str(path) + ".meta")
    if not meta.exists():
        raise CheckpointError(f"missing sidecar {meta}")
    kv: dict[str, str] = {}
    for line in meta.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()
    kwargs = {}
    for f in fields(ModelConfig):
        if f.name in kv:
            cast = float if f.type == "float" else int
            kwargs[f.name] = cast(kv.pop(f.name))
    return ModelConfig(**kwargs).validate(), kv


def save_model(path, params: ModelParams, extra_arrays: dict[str, Tensor] | None = None,
               extra_meta: dict[str, str] | None = None):
    arrays = {name: t.data for name, t in params.named().items()}
    for name, t in (extra_arrays or {}).items():
        arrays[name] = t.data
    save_arrays(path, arrays, aliases=dict(ModelParams.ALIASES))
    write_sidecar(path, params.config, extra_meta)


def load_model(path) -> tuple[ModelParams, dict[str, np.ndarray], dict[str, str]]:
    """Rebuild ModelParams; returns (params, leftover arrays, extra meta)."""
    config, extra_meta = read_sidecar(path)
    arrays, _aliases = load_arrays(path)
    params = ModelParams(config, seed=0)
    for name, tensor in params.named().items():
        if name not in arrays:
            raise CheckpointError(f"{path}: missing array {name!r}")
        got = arrays.pop(name)
        if got.shape != tensor.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name!r}: {got.shape} vs {tensor.data.shape}")
        tensor.data[...] = got
    return params, arrays, extra_meta
