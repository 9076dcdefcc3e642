"""Binary checkpoint format: u32 count, then (name, shape, f32 data, f32 ema) records."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import ParameterSet


def save_checkpoint(path: str | Path, params: ParameterSet) -> None:
    names = params.names()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            raw = name.encode("utf-8")
            data = np.ascontiguousarray(params[name].data, dtype="<f4")
            ema = np.ascontiguousarray(params.ema_value(name), dtype="<f4")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())
            fh.write(ema.tobytes())


def load_checkpoint(path: str | Path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Returns {name: (data, ema)} as float32 arrays."""
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    with open(path, "rb") as fh:
        (count,) = struct.unpack("<I", fh.read(4))
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * size), dtype="<f4").reshape(shape).copy()
            ema = np.frombuffer(fh.read(4 * size), dtype="<f4").reshape(shape).copy()
            out[name] = (data, ema)
    return out


def restore_into(params: ParameterSet, loaded: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
    for name in params.names():
        if name not in loaded:
            raise KeyError(f"checkpoint is missing parameter {name}")
        data, ema = loaded[name]
        current = params[name]
        if tuple(data.shape) != tuple(current.data.shape):
            raise ValueError(f"shape mismatch for {name}: {data.shape} vs {current.data.shape}")
        current.data = data.astype(current.data.dtype)
        params._ema[name] = ema.astype(current.data.dtype)
