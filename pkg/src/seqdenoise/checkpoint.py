"""Single-file checkpoint: JSON manifest plus raw little-endian float32 blobs."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SDNCKPT1"


class CheckpointError(IOError):
    """Corrupt or incompatible checkpoint file."""


def save_checkpoint(
    path: str | Path, tensors: dict[str, np.ndarray], manifest: dict
) -> None:
    """Write manifest + tensor blobs; tensors are stored as '<f4' verbatim."""
    index = {}
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = arr.tobytes()
        index[name] = {"shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        blobs.append(raw)
        offset += len(raw)
    header = dict(manifest)
    header["tensors"] = index
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(hlen).decode("utf-8"))
        blob = fh.read()
    index = manifest.pop("tensors", {})
    tensors = {}
    for name, meta in index.items():
        start, nbytes = meta["offset"], meta["nbytes"]
        arr = np.frombuffer(blob[start : start + nbytes], dtype="<f4")
        tensors[name] = arr.reshape(meta["shape"]).copy()
    return tensors, manifest
