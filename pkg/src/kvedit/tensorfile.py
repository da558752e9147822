"""Checkpoint tensor-file reading, writing, selection, and merge.

File layout: an 8-byte little-endian unsigned header length, a JSON header
mapping tensor names to ``{"dtype", "shape", "data_offsets"}`` (offsets are
[begin, end) into the payload that follows), plus an optional
``__metadata__`` string map. All tensor data is little-endian.

Reading preserves each tensor's raw bytes; writing re-emits the header
canonically (sorted keys, compact separators) but keeps the payload in its
original order, so an edit perturbs only the edited tensors' payload
ranges. Internal math is float64; edited tensors are written back in their
original on-disk dtype with round-half-even conversion.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    MalformedHeaderError,
    OffsetRangeError,
    SelectionError,
    TruncatedFileError,
    UnsupportedDtypeError,
)
from .types import AttentionLayerSet, ProjectionMatrix

_ITEMSIZE = {"F16": 2, "BF16": 2, "F32": 4, "F64": 8}
_NUMPY_DTYPE = {"F16": np.dtype("<f2"), "F32": np.dtype("<f4"), "F64": np.dtype("<f8")}


def decode_values(raw: bytes, dtype: str, shape: tuple[int, ...]) -> np.ndarray:
    """Decode raw little-endian bytes to float64 values."""
    if dtype == "BF16":
        bits = np.frombuffer(raw, dtype="<u2").astype(np.uint32) << 16
        values = bits.view(np.float32).astype(np.float64)
    else:
        values = np.frombuffer(raw, dtype=_NUMPY_DTYPE[dtype]).astype(np.float64)
    return values.reshape(shape)


def encode_values(values: np.ndarray, dtype: str) -> bytes:
    """Encode float64 values into the on-disk dtype (round-half-even)."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    if dtype == "BF16":
        f32 = values.astype(np.float32)
        bits = f32.view(np.uint32)
        rounded = ((bits + 0x7FFF + ((bits >> 16) & 1)) >> 16).astype("<u2")
        return rounded.tobytes()
    return values.astype(_NUMPY_DTYPE[dtype]).tobytes()


@dataclass(frozen=True)
class TensorEntry:
    dtype: str
    shape: tuple[int, ...]
    raw: bytes

    @property
    def n_params(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    def values(self) -> np.ndarray:
        return decode_values(self.raw, self.dtype, self.shape)


@dataclass
class TensorFile:
    """Parsed tensor container. Entry order follows ascending payload offsets."""

    entries: dict[str, TensorEntry]
    metadata: Optional[dict[str, str]] = None

    def names(self) -> list[str]:
        return list(self.entries)

    def tensor(self, name: str) -> np.ndarray:
        return self.entries[name].values()

    def with_tensor(self, name: str, values: np.ndarray) -> "TensorFile":
        """A copy with one tensor replaced (same dtype and shape)."""
        entry = self.entries[name]
        values = np.asarray(values, dtype=np.float64)
        if tuple(values.shape) != entry.shape:
            raise DimensionMismatchError(
                f"tensor {name!r} element count",
                int(np.prod(values.shape)),
                entry.n_params,
            )
        new_entries = dict(self.entries)
        new_entries[name] = TensorEntry(entry.dtype, entry.shape, encode_values(values, entry.dtype))
        return TensorFile(new_entries, dict(self.metadata) if self.metadata else None)


def _canonical_dtype(tag: str) -> str:
    canon = str(tag).upper()
    if canon not in _ITEMSIZE:
        raise UnsupportedDtypeError(
            f"unsupported dtype {tag!r}; expected one of {sorted(_ITEMSIZE)}"
        )
    return canon


def read_tensor_file(path) -> TensorFile:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise TruncatedFileError(f"{path}: file shorter than the 8-byte header length")
    (header_len,) = struct.unpack("<Q", blob[:8])
    if len(blob) < 8 + header_len:
        raise TruncatedFileError(
            f"{path}: header declares {header_len} bytes but only "
            f"{len(blob) - 8} follow"
        )
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"{path}: header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError(f"{path}: header must be a JSON object")

    payload = blob[8 + header_len :]
    metadata = None
    parsed: list[tuple[int, int, str, str, tuple[int, ...]]] = []
    for name, info in header.items():
        if name == "__metadata__":
            if not isinstance(info, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in info.items()
            ):
                raise MalformedHeaderError(f"{path}: __metadata__ must map strings to strings")
            metadata = dict(info)
            continue
        if not isinstance(info, dict):
            raise MalformedHeaderError(f"{path}: entry {name!r} is not an object")
        try:
            dtype = _canonical_dtype(info["dtype"])
            shape = tuple(int(s) for s in info["shape"])
            begin, end = (int(v) for v in info["data_offsets"])
        except UnsupportedDtypeError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedHeaderError(f"{path}: entry {name!r} is malformed: {exc}") from exc
        if any(s < 0 for s in shape) or begin < 0 or end < begin:
            raise MalformedHeaderError(f"{path}: entry {name!r} has invalid shape/offsets")
        expected = int(np.prod(shape)) * _ITEMSIZE[dtype] if shape else _ITEMSIZE[dtype]
        if end - begin != expected:
            raise MalformedHeaderError(
                f"{path}: entry {name!r} byte range {end - begin} != "
                f"shape/dtype size {expected}"
            )
        if end > len(payload):
            raise OffsetRangeError(
                f"{path}: entry {name!r} range [{begin}, {end}) exceeds payload "
                f"size {len(payload)}"
            )
        parsed.append((begin, end, name, dtype, shape))

    parsed.sort(key=lambda item: item[0])
    prev_end = 0
    entries: dict[str, TensorEntry] = {}
    for begin, end, name, dtype, shape in parsed:
        if begin < prev_end:
            raise MalformedHeaderError(f"{path}: entry {name!r} overlaps the previous range")
        prev_end = end
        entries[name] = TensorEntry(dtype, shape, payload[begin:end])
    return TensorFile(entries, metadata)


def write_tensor_file(file: TensorFile, path) -> None:
    header: dict = {}
    if file.metadata is not None:
        header["__metadata__"] = dict(file.metadata)
    offset = 0
    chunks = []
    for name, entry in file.entries.items():
        end = offset + len(entry.raw)
        header[name] = {
            "dtype": entry.dtype,
            "shape": list(entry.shape),
            "data_offsets": [offset, end],
        }
        chunks.append(entry.raw)
        offset = end
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for chunk in chunks:
            fh.write(chunk)


@dataclass(frozen=True)
class SelectionPattern:
    """Name rules identifying cross-attention K/V projection tensors.

    A tensor is selected when its name contains any ``include`` substring
    and ends with the K or V suffix. ``transpose`` handles checkpoints that
    store projections as d x out instead of out x d.
    """

    include: tuple[str, ...] = ("attn2",)
    k_suffix: str = ".to_k.weight"
    v_suffix: str = ".to_v.weight"
    transpose: bool = False

    def match(self, name: str) -> Optional[str]:
        """Return 'K' or 'V' for a selected name, else None."""
        if self.include and not any(sub in name for sub in self.include):
            return None
        if name.endswith(self.k_suffix):
            return "K"
        if name.endswith(self.v_suffix):
            return "V"
        return None


def select_cross_attention(file: TensorFile, pattern: SelectionPattern) -> AttentionLayerSet:
    """Extract the matching projection matrices as a name-sorted layer set."""
    layers = []
    for name in sorted(file.entries):
        kind = pattern.match(name)
        if kind is None:
            continue
        entry = file.entries[name]
        if len(entry.shape) != 2:
            raise SelectionError(
                f"selected tensor {name!r} is {len(entry.shape)}-D, expected 2-D"
            )
        W = entry.values()
        if pattern.transpose:
            W = W.T
        layers.append(
            ProjectionMatrix(
                name=name,
                kind=kind,
                W=W,
                source_dtype=entry.dtype,
                transposed=pattern.transpose,
            )
        )
    if not layers:
        raise SelectionError(
            f"pattern {pattern} matched no tensors among {len(file.entries)} entries"
        )
    return AttentionLayerSet(tuple(layers))


def merge_back(edited: AttentionLayerSet, original: TensorFile) -> TensorFile:
    """Write edited projections back into a copy of the file.

    Only the edited tensors change; every other entry keeps its exact bytes.
    """
    merged = original
    for layer in edited:
        if layer.name not in original.entries:
            raise SelectionError(f"edited layer {layer.name!r} not present in the file")
        values = layer.W.T if layer.transposed else layer.W
        entry = original.entries[layer.name]
        if tuple(values.shape) != entry.shape:
            raise DimensionMismatchError(
                f"merged tensor {layer.name!r} element count",
                int(np.prod(values.shape)),
                entry.n_params,
            )
        merged = merged.with_tensor(layer.name, values)
    return merged


@dataclass(frozen=True)
class ModelStats:
    total_params: int
    selected_params: int

    @property
    def fraction(self) -> float:
        return self.selected_params / self.total_params if self.total_params else 0.0


def model_stats(file: TensorFile, pattern: SelectionPattern) -> ModelStats:
    """Parameter counts from header shapes only; no payload access."""
    total = 0
    selected = 0
    for name, entry in file.entries.items():
        total += entry.n_params
        if pattern.match(name) is not None:
            selected += entry.n_params
    return ModelStats(total_params=total, selected_params=selected)


def changed_payload_ranges(a: TensorFile, b: TensorFile) -> list[str]:
    """Names of tensors whose raw bytes differ between two files."""
    names = set(a.entries) | set(b.entries)
    changed = []
    for name in sorted(names):
        ea = a.entries.get(name)
        eb = b.entries.get(name)
        if ea is None or eb is None or ea.raw != eb.raw:
            changed.append(name)
    return changed
