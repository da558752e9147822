"""Core value types: embeddings, projection matrices, layer sets, configuration.

All numeric payloads are normalized to float64 at construction time; on-disk
dtypes are tracked separately so checkpoint round-trips can restore them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, KvEditError


def _as_matrix(data, what: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise KvEditError(f"{what} must be 1-D or 2-D, got {arr.ndim}-D")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise KvEditError(f"{what} must be nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise KvEditError(f"{what} contains non-finite entries")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class Embedding:
    """A d x m matrix whose columns are token embeddings of one concept."""

    data: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix(self.data, "embedding data"))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def tokens(self) -> int:
        return self.data.shape[1]

    def columns(self) -> Iterable[np.ndarray]:
        for k in range(self.data.shape[1]):
            yield self.data[:, k]


@dataclass(frozen=True)
class ConceptTask:
    """One erasure target: map the source concept onto the destination."""

    source: Embedding
    destination: Embedding
    label: str = ""

    def __post_init__(self):
        if self.source.dim != self.destination.dim:
            raise DimensionMismatchError(
                "task source/destination embedding dim", self.source.dim, self.destination.dim
            )
        if self.source.tokens != self.destination.tokens:
            raise DimensionMismatchError(
                "task source/destination token count", self.source.tokens, self.destination.tokens
            )


@dataclass(frozen=True)
class ProjectionMatrix:
    """A named K or V projection, stored as an out x d matrix."""

    name: str
    kind: str  # "K" or "V"
    W: np.ndarray
    source_dtype: Optional[str] = None  # on-disk dtype tag, if read from a file
    transposed: bool = False  # stored as d x out on disk

    def __post_init__(self):
        if self.kind not in ("K", "V"):
            raise KvEditError(f"projection kind must be 'K' or 'V', got {self.kind!r}")
        object.__setattr__(self, "W", _as_matrix(self.W, f"projection {self.name!r}"))

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.W.shape[1]

    def with_weights(self, W: np.ndarray) -> "ProjectionMatrix":
        return replace(self, W=W)


@dataclass(frozen=True)
class AttentionLayerSet:
    """Ordered collection of projection matrices sharing one embedding dim."""

    layers: tuple[ProjectionMatrix, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise KvEditError("layer set must be nonempty")
        d = layers[0].embed_dim
        for layer in layers[1:]:
            if layer.embed_dim != d:
                raise DimensionMismatchError(
                    f"layer {layer.name!r} embedding dim", layer.embed_dim, d
                )
        names = [layer.name for layer in layers]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise KvEditError(f"duplicate layer names: {dupes}")
        object.__setattr__(self, "layers", layers)

    @property
    def embed_dim(self) -> int:
        return self.layers[0].embed_dim

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    def __getitem__(self, key):
        if isinstance(key, str):
            for layer in self.layers:
                if layer.name == key:
                    return layer
            raise KeyError(key)
        return self.layers[key]

    def names(self) -> list[str]:
        return [layer.name for layer in self.layers]


PRESETS = {
    # preset name -> (lambda_reg, epochs)
    "unsafe": (0.1, 5),
    "artistic": (1e-3, 10),
    "object": (0.1, 5),
}


@dataclass(frozen=True)
class EditConfig:
    """Hyperparameters for editing and embedding derivation."""

    lambda1: float = 0.1
    lambda2: float = 0.1
    lambda_reg: float = 0.1
    epochs: int = 5
    solve_tol: float = 1e-10
    oracle_tol: float = 1e-9

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda_reg < 0:
            raise KvEditError("lambda values must be nonnegative")
        if self.epochs < 0:
            raise KvEditError("epoch count must be nonnegative")
        if self.solve_tol <= 0 or self.oracle_tol <= 0:
            raise KvEditError("tolerances must be positive")

    @classmethod
    def preset(cls, name: str, **overrides) -> "EditConfig":
        if name == "custom":
            return cls(**overrides)
        try:
            lambda_reg, epochs = PRESETS[name]
        except KeyError:
            raise KvEditError(
                f"unknown preset {name!r}; expected one of {sorted(PRESETS)} or 'custom'"
            ) from None
        params = {"lambda_reg": lambda_reg, "epochs": epochs}
        params.update(overrides)
        return cls(**params)


def check_embedding_dims(dim: int, embeddings: Sequence[Embedding], what: str) -> None:
    for emb in embeddings:
        if emb.dim != dim:
            raise DimensionMismatchError(f"{what} ({emb.label!r}) dim vs layer dim", emb.dim, dim)
