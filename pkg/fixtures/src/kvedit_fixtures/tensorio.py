"""Minimal reader/writer for the tensor-file layout the editor consumes.

The format: an 8-byte little-endian unsigned header length, that many bytes
of JSON mapping tensor names to {"dtype", "shape", "data_offsets"}, then the
raw little-endian payload. Only the dtypes this exporter emits (plus f16,
which real checkpoints use) are supported.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_DTYPES = {
    "F16": np.dtype("<f2"),
    "F32": np.dtype("<f4"),
    "F64": np.dtype("<f8"),
}


class FormatError(ValueError):
    pass


def read_tensors(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise FormatError(f"{path}: too short for a header length")
    (n,) = struct.unpack("<Q", blob[:8])
    if len(blob) < 8 + n:
        raise FormatError(f"{path}: truncated header")
    header = json.loads(blob[8 : 8 + n].decode("utf-8"))
    payload = blob[8 + n :]
    tensors = {}
    for name, info in header.items():
        if name == "__metadata__":
            continue
        dtype = str(info["dtype"]).upper()
        if dtype == "BF16":
            begin, end = info["data_offsets"]
            bits = np.frombuffer(payload[begin:end], dtype="<u2").astype(np.uint32) << 16
            tensors[name] = bits.view(np.float32).astype(np.float64).reshape(info["shape"])
            continue
        if dtype not in _DTYPES:
            raise FormatError(f"{path}: tensor {name!r} has unsupported dtype {dtype}")
        begin, end = info["data_offsets"]
        values = np.frombuffer(payload[begin:end], dtype=_DTYPES[dtype])
        tensors[name] = values.astype(np.float64).reshape(info["shape"])
    return tensors


def read_shapes(path) -> dict[str, tuple[int, ...]]:
    """Header-only pass: tensor name -> shape, without decoding payloads."""
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
    return {
        name: tuple(info["shape"])
        for name, info in header.items()
        if name != "__metadata__"
    }


def write_tensors(tensors: dict[str, np.ndarray], path, dtype: str = "F32") -> None:
    """Write float arrays in a single on-disk dtype, offsets in name order."""
    if dtype not in _DTYPES:
        raise FormatError(f"unsupported write dtype {dtype}")
    header = {}
    chunks = []
    offset = 0
    for name in sorted(tensors):
        raw = np.ascontiguousarray(tensors[name], dtype=_DTYPES[dtype]).tobytes()
        header[name] = {
            "dtype": dtype,
            "shape": list(np.asarray(tensors[name]).shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        chunks.append(raw)
        offset += len(raw)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for chunk in chunks:
            fh.write(chunk)
