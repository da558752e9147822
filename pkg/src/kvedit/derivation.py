"""Derivation of the embedding that re-expresses an erased concept.

Given original matrices W_old and edited matrices W_new, the embedding c'
whose projections through the edited model best reproduce the original
model's projections of c minimizes

    sum_i ||W_i_new c' - W_i_old c||^2 + lambda * ||c'||^2

with unique ridge solution

    c' = (lambda I + sum_i W_i_new^T W_i_new)^{-1} (sum_i W_i_new^T W_i_old) c.

lambda = 0 is permitted when the stacked edited matrices have full column
rank; the result flags that case via ``lambda_used``. Multi-token c is
solved column-wise against a single shared factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, LayerAlignmentError
from .linalg import solve_spd
from .types import AttentionLayerSet, Embedding


@dataclass(frozen=True)
class DerivationResult:
    c_prime: Embedding
    objective_value: float
    residual_per_layer: tuple[tuple[str, float], ...]
    norm: tuple[float, ...]  # 2-norm of each derived column
    lambda_used: float

    @property
    def regularized(self) -> bool:
        return self.lambda_used > 0.0


def check_aligned(new_set: AttentionLayerSet, old_set: AttentionLayerSet) -> None:
    """Require identical names, kinds, shapes, and order."""
    if len(new_set) != len(old_set):
        raise LayerAlignmentError(
            f"layer count mismatch: {len(new_set)} vs {len(old_set)}"
        )
    for idx, (new, old) in enumerate(zip(new_set, old_set)):
        if new.name != old.name:
            raise LayerAlignmentError(
                f"layer {idx}: name {new.name!r} vs {old.name!r}"
            )
        if new.kind != old.kind:
            raise LayerAlignmentError(
                f"layer {idx} ({new.name!r}): kind {new.kind} vs {old.kind}"
            )
        if new.W.shape != old.W.shape:
            raise LayerAlignmentError(
                f"layer {idx} ({new.name!r}): shape {new.W.shape} vs {old.W.shape}"
            )


def derivation_objective(
    c_prime: Embedding,
    c: Embedding,
    new_set: AttentionLayerSet,
    old_set: AttentionLayerSet,
    lambda_reg: float,
) -> float:
    check_aligned(new_set, old_set)
    _check_dims(c_prime, c, new_set)
    total = lambda_reg * float(np.sum(c_prime.data * c_prime.data))
    for new, old in zip(new_set, old_set):
        r = new.W @ c_prime.data - old.W @ c.data
        total += float(np.sum(r * r))
    return total


def derivation_gradient(
    c_prime: Embedding,
    c: Embedding,
    new_set: AttentionLayerSet,
    old_set: AttentionLayerSet,
    lambda_reg: float,
) -> np.ndarray:
    check_aligned(new_set, old_set)
    _check_dims(c_prime, c, new_set)
    grad = 2.0 * lambda_reg * c_prime.data
    for new, old in zip(new_set, old_set):
        grad = grad + 2.0 * (new.W.T @ (new.W @ c_prime.data - old.W @ c.data))
    return grad


def derive_embedding(
    c: Embedding,
    new_set: AttentionLayerSet,
    old_set: AttentionLayerSet,
    lambda_reg: float,
) -> DerivationResult:
    check_aligned(new_set, old_set)
    _check_dims(None, c, new_set)
    d = new_set.embed_dim
    # Fixed accumulation order (layer order) keeps results deterministic.
    A = lambda_reg * np.eye(d)
    B = np.zeros((d, d))
    for new, old in zip(new_set, old_set):
        A += new.W.T @ new.W
        B += new.W.T @ old.W
    context = (
        "derivation normal matrix (lambda = 0 requires full column rank)"
        if lambda_reg == 0.0
        else "derivation normal matrix"
    )
    c_prime_data = solve_spd(A, B @ c.data, context)
    c_prime = Embedding(c_prime_data, label=f"{c.label}'" if c.label else "derived")

    residuals = []
    total = lambda_reg * float(np.sum(c_prime_data * c_prime_data))
    for new, old in zip(new_set, old_set):
        r = new.W @ c_prime_data - old.W @ c.data
        val = float(np.sum(r * r))
        residuals.append((new.name, val))
        total += val
    norms = tuple(float(np.linalg.norm(c_prime_data[:, k])) for k in range(c_prime.tokens))
    return DerivationResult(
        c_prime=c_prime,
        objective_value=total,
        residual_per_layer=tuple(residuals),
        norm=norms,
        lambda_used=float(lambda_reg),
    )


def _check_dims(c_prime, c: Embedding, new_set: AttentionLayerSet) -> None:
    d = new_set.embed_dim
    if c.dim != d:
        raise DimensionMismatchError(f"embedding {c.label!r} dim vs layer dim", c.dim, d)
    if c_prime is not None:
        if c_prime.dim != d:
            raise DimensionMismatchError("derived embedding dim vs layer dim", c_prime.dim, d)
        if c_prime.tokens != c.tokens:
            raise DimensionMismatchError("derived token count", c_prime.tokens, c.tokens)
