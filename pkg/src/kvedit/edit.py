"""Closed-form editing of K/V projection matrices.

The edit maps every erased concept's projection onto its destination
concept's original projection while penalizing movement on preserved
concepts and on the weights themselves:

    min_W  sum_E ||W c_i - W_old c_i*||^2
         + lambda1 * sum_P ||W c_j - W_old c_j||^2
         + lambda2 * ||W - W_old||_F^2

whose unique minimizer is W = W_old * N * D^{-1} with

    N = sum_E c_i* c_i^T + lambda1 * sum_P c_j c_j^T + lambda2 * I
    D = sum_E c_i  c_i^T + lambda1 * sum_P c_j c_j^T + lambda2 * I

Multi-token embeddings enter the sums column by column, each source column
paired with the matching destination column. N and D are accumulated in a
fixed order so that degenerate inputs (empty erase set, destination equal
to source, all-zero sources) make N and D bitwise equal, in which case the
input weights are returned unchanged.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError
from .linalg import solve_spd
from .types import (
    AttentionLayerSet,
    ConceptTask,
    Embedding,
    ProjectionMatrix,
    check_embedding_dims,
)


def project_kv(W: ProjectionMatrix, c: Embedding) -> np.ndarray:
    """Project an embedding through one K/V matrix, column-wise."""
    if W.embed_dim != c.dim:
        raise DimensionMismatchError(
            f"projection {W.name!r} embed dim vs embedding {c.label!r} dim", W.embed_dim, c.dim
        )
    return W.W @ c.data


def edit_objective(
    W: ProjectionMatrix,
    W_old: ProjectionMatrix,
    erase: Sequence[ConceptTask],
    preserve: Sequence[Embedding],
    lambda1: float,
    lambda2: float,
) -> float:
    """Evaluate the edit objective at W. Direct evaluation, no closed form."""
    if W.W.shape != W_old.W.shape:
        raise DimensionMismatchError(
            "objective weight shapes", W.W.shape[0] * W.W.shape[1],
            W_old.W.shape[0] * W_old.W.shape[1],
        )
    _check_task_dims(W_old.embed_dim, erase, preserve)
    total = 0.0
    for task in erase:
        r = W.W @ task.source.data - W_old.W @ task.destination.data
        total += float(np.sum(r * r))
    for emb in preserve:
        r = (W.W - W_old.W) @ emb.data
        total += lambda1 * float(np.sum(r * r))
    dW = W.W - W_old.W
    total += lambda2 * float(np.sum(dW * dW))
    return total


def edit_coefficients(
    erase: Sequence[ConceptTask],
    preserve: Sequence[Embedding],
    lambda1: float,
    lambda2: float,
    dim: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate the numerator/denominator coefficient matrices N and D.

    Accumulation order is fixed (erase columns, then preserve columns, then
    the ridge term) so identical contributions yield bitwise-equal results.
    """
    _check_task_dims(dim, erase, preserve)
    N = np.zeros((dim, dim))
    D = np.zeros((dim, dim))
    for task in erase:
        for k in range(task.source.tokens):
            src = task.source.data[:, k]
            dst = task.destination.data[:, k]
            N += np.outer(dst, src)
            D += np.outer(src, src)
    for emb in preserve:
        for col in emb.columns():
            outer = lambda1 * np.outer(col, col)
            N += outer
            D += outer
    ridge = lambda2 * np.eye(dim)
    N += ridge
    D += ridge
    return N, D


def _edit_map(N: np.ndarray, D: np.ndarray) -> np.ndarray | None:
    """Return M^T where M = N D^{-1}, or None when N == D bitwise (no-op edit)."""
    if np.array_equal(N, D):
        return None
    # D is symmetric, so solve(D, N^T) = D^{-1} N^T = (N D^{-1})^T.
    return solve_spd(D, N.T, "edit denominator")


def closed_form_edit(
    W_old: ProjectionMatrix,
    erase: Sequence[ConceptTask],
    preserve: Sequence[Embedding] = (),
    lambda1: float = 0.1,
    lambda2: float = 0.1,
) -> ProjectionMatrix:
    """Apply the closed-form edit to a single projection matrix."""
    N, D = edit_coefficients(erase, preserve, lambda1, lambda2, W_old.embed_dim)
    Mt = _edit_map(N, D)
    if Mt is None:
        return W_old.with_weights(W_old.W.copy())
    return W_old.with_weights(W_old.W @ Mt.T)


def edit_layer_set(
    layers: AttentionLayerSet,
    erase: Sequence[ConceptTask],
    preserve: Sequence[Embedding] = (),
    lambda1: float = 0.1,
    lambda2: float = 0.1,
) -> AttentionLayerSet:
    """Edit every matrix in a layer set with shared coefficient matrices."""
    N, D = edit_coefficients(erase, preserve, lambda1, lambda2, layers.embed_dim)
    Mt = _edit_map(N, D)
    if Mt is None:
        return AttentionLayerSet(tuple(l.with_weights(l.W.copy()) for l in layers))
    M = Mt.T
    return AttentionLayerSet(tuple(l.with_weights(l.W @ M) for l in layers))


def drift(W_a: ProjectionMatrix, W_b: ProjectionMatrix, d_emb: Embedding) -> float:
    """Squared deviation of one concept's projection between two matrices."""
    if W_a.W.shape != W_b.W.shape:
        raise DimensionMismatchError(
            "drift weight rows", W_a.out_dim, W_b.out_dim
        )
    if W_a.embed_dim != d_emb.dim:
        raise DimensionMismatchError(
            f"drift embed dim vs embedding {d_emb.label!r}", W_a.embed_dim, d_emb.dim
        )
    r = (W_a.W - W_b.W) @ d_emb.data
    return float(np.sum(r * r))


def _check_task_dims(
    dim: int, erase: Sequence[ConceptTask], preserve: Sequence[Embedding]
) -> None:
    check_embedding_dims(dim, [t.source for t in erase], "erase source")
    check_embedding_dims(dim, [t.destination for t in erase], "erase destination")
    check_embedding_dims(dim, preserve, "preserve")
