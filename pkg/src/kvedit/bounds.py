"""Drift bound chain for one erasure step.

For a step that erases derived embeddings c' (destinations c*) on top of
weights W_new1, producing W_new2, the collateral drift on an unrelated
embedding d obeys the Frobenius chain

    F  = ||W_new2 d - W_new1 d||^2        <= F1 * ||d||^2
    F1 = ||W_new2 - W_new1||_F^2          <= ||W_new1||_F^2 * F2
    F2 = ||N U^{-1} - I||_F^2             <= F3 * ||U^{-1}||_F^2
    F3 = ||sum (c* - c') c'^T||_F^2       <= (sum ||(c* - c') c'^T||_F)^2

where N and U are the edit's numerator/denominator coefficient matrices.
The preserve and ridge contributions cancel in N - U, so F3 depends only on
c' and c*. Every quantity is recomputed here from its definition; the chain
is asserted with a scale-relative tolerance and returned as a report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .edit import edit_coefficients
from .linalg import solve_spd
from .types import ConceptTask, Embedding, ProjectionMatrix

CHAIN_RTOL = 1e-9


@dataclass(frozen=True)
class BoundReport:
    F: float
    F1: float
    F2: float
    F3: float
    F3_upper: float
    U_inv_frob_sq: float
    W_new1_frob_sq: float
    d_norm_sq: float
    chain_ok: bool

    def links(self) -> tuple[tuple[str, float, float], ...]:
        """The chain as (label, lhs, rhs) triples, lhs <= rhs expected."""
        return (
            ("F <= F1 * ||d||^2", self.F, self.F1 * self.d_norm_sq),
            ("F1 <= ||W_new1||_F^2 * F2", self.F1, self.W_new1_frob_sq * self.F2),
            ("F2 <= F3 * ||U^-1||_F^2", self.F2, self.F3 * self.U_inv_frob_sq),
            ("F3 <= sum of per-term norms", self.F3, self.F3_upper),
        )


def _holds(lhs: float, rhs: float) -> bool:
    return lhs <= rhs + CHAIN_RTOL * (1.0 + max(abs(lhs), abs(rhs)))


def bound_chain(
    W_new1: ProjectionMatrix,
    erase: Sequence[tuple[Embedding, Embedding]],
    preserve: Sequence[Embedding],
    lambda1: float,
    lambda2: float,
    d_emb: Embedding,
) -> BoundReport:
    """Evaluate the drift bound chain for one (c', c*) erasure step.

    ``erase`` holds (c_prime, c_star) pairs; multi-token embeddings
    contribute one term per column.
    """
    tasks = [
        ConceptTask(source=cp, destination=cs, label=cp.label)
        for cp, cs in erase
    ]
    N, U = edit_coefficients(tasks, preserve, lambda1, lambda2, W_new1.embed_dim)

    dim = W_new1.embed_dim
    # N == U bitwise means a mathematically exact no-op step (e.g. c' = 0);
    # short-circuit so the zero case reports exact zeros, as in edit_layer_set.
    if np.array_equal(N, U):
        M = np.eye(dim)
    else:
        M = solve_spd(U, N.T, "bound chain denominator U").T
    W2 = W_new1.W @ M
    delta = W2 - W_new1.W

    r = delta @ d_emb.data
    F = float(np.sum(r * r))
    F1 = float(np.sum(delta * delta))
    E2 = M - np.eye(dim)
    F2 = float(np.sum(E2 * E2))

    S = np.zeros((dim, dim))
    norm_sum = 0.0
    for cp, cs in erase:
        for k in range(cp.tokens):
            term = np.outer(cs.data[:, k] - cp.data[:, k], cp.data[:, k])
            S += term
            norm_sum += float(np.sqrt(np.sum(term * term)))
    F3 = float(np.sum(S * S))
    # Triangle inequality: ||sum T_i||_F <= sum ||T_i||_F, then squared.
    F3_upper = norm_sum * norm_sum

    U_inv = solve_spd(U, np.eye(dim), "bound chain U inverse")
    U_inv_frob_sq = float(np.sum(U_inv * U_inv))
    W1_frob_sq = float(np.sum(W_new1.W * W_new1.W))
    d_norm_sq = float(np.sum(d_emb.data * d_emb.data))

    chain_ok = (
        _holds(F, F1 * d_norm_sq)
        and _holds(F1, W1_frob_sq * F2)
        and _holds(F2, F3 * U_inv_frob_sq)
        and _holds(F3, F3_upper)
    )
    return BoundReport(
        F=F,
        F1=F1,
        F2=F2,
        F3=F3,
        F3_upper=F3_upper,
        U_inv_frob_sq=U_inv_frob_sq,
        W_new1_frob_sq=W1_frob_sq,
        d_norm_sq=d_norm_sq,
        chain_ok=chain_ok,
    )
