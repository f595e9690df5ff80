"""Binary tensor dumps and whole-model weight snapshots.

Dump record: magic ``VRT0``, rank as little-endian u32, extents as u32
each, then the elements as little-endian float64 in row-major order.
A weight snapshot is a directory holding ``manifest.txt`` (one line per
parameter: name, frozen flag, rank, extents) and ``params.bin`` with the
dump records concatenated in manifest order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np
import torch
import torch.nn as nn

MAGIC = b"VRT0"
MANIFEST = "manifest.txt"
PARAMS = "params.bin"


def write_array(fh: BinaryIO, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f8")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


def read_array(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack("<I", fh.read(4))
    shape = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
    count = int(np.prod(shape)) if rank else 1
    data = np.frombuffer(fh.read(8 * count), dtype="<f8")
    if data.size != count:
        raise ValueError("truncated tensor record")
    return data.reshape(shape).copy()


def save_weights(directory: str | Path, model: nn.Module) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    with open(directory / PARAMS, "wb") as fh:
        for name, param in model.named_parameters():
            frozen = int(not param.requires_grad)
            dims = " ".join(str(d) for d in param.shape)
            lines.append(f"{name} {frozen} {param.dim()} {dims}".rstrip())
            write_array(fh, param.detach().numpy())
    (directory / MANIFEST).write_text("".join(line + "\n" for line in lines))


def load_weights(directory: str | Path, model: nn.Module) -> None:
    """Copy a snapshot into ``model``; names, shapes and frozen flags must match."""
    directory = Path(directory)
    manifest = (directory / MANIFEST).read_text().splitlines()
    params = dict(model.named_parameters())
    if len(manifest) != len(params):
        raise ValueError(f"snapshot has {len(manifest)} parameters, model has {len(params)}")
    with open(directory / PARAMS, "rb") as fh:
        for line in manifest:
            fields = line.split()
            name, frozen, rank = fields[0], bool(int(fields[1])), int(fields[2])
            shape = tuple(int(d) for d in fields[3 : 3 + rank])
            if name not in params:
                raise ValueError(f"snapshot parameter {name} not in model")
            param = params[name]
            if tuple(param.shape) != shape:
                raise ValueError(f"shape mismatch for {name}: {tuple(param.shape)} vs {shape}")
            if param.requires_grad == frozen:
                raise ValueError(f"frozen flag mismatch for {name}")
            array = read_array(fh)
            with torch.no_grad():
                param.copy_(torch.from_numpy(array))
        if fh.read(1):
            raise ValueError("trailing bytes after last snapshot record")
