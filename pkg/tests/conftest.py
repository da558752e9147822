import math

import numpy as np
import pytest

from kvedit import AttentionLayerSet, ConceptTask, Embedding, ProjectionMatrix


def naive_matmul(A, B):
    """Entrywise triple-loop matrix multiply; the independent oracle."""
    n, k = A.shape
    k2, m = B.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += A[i, t] * B[t, j]
            out[i, j] = acc
    return out


def loop_edit_objective(W, W_old, erase, preserve, lambda1, lambda2):
    """Term-by-term recomputation of the edit objective with explicit loops."""
    total = 0.0
    for task in erase:
        for k in range(task.source.tokens):
            r = naive_matmul(W, task.source.data[:, k : k + 1]) - naive_matmul(
                W_old, task.destination.data[:, k : k + 1]
            )
            total += float(np.sum(r * r))
    for emb in preserve:
        for k in range(emb.tokens):
            r = naive_matmul(W - W_old, emb.data[:, k : k + 1])
            total += lambda1 * float(np.sum(r * r))
    total += lambda2 * float(np.sum((W - W_old) ** 2))
    return total


def loop_derivation_objective(c_prime, c, new_set, old_set, lambda_reg):
    total = lambda_reg * float(np.sum(c_prime**2))
    for new, old in zip(new_set, old_set):
        r = naive_matmul(new.W, c_prime) - naive_matmul(old.W, c)
        total += float(np.sum(r * r))
    return total


def unit_vector(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_embedding(rng, d, m=1, label=""):
    return Embedding(np.column_stack([unit_vector(rng, d) for _ in range(m)]), label=label)


def random_projection(rng, out, d, name="w", kind="K"):
    return ProjectionMatrix(name, kind, rng.standard_normal((out, d)) / math.sqrt(d))


def random_layer_set(rng, n_layers, d, out_choices=None):
    layers = []
    for i in range(n_layers):
        out = int(rng.choice(out_choices)) if out_choices else int(rng.integers(d, 2 * d + 8))
        layers.append(random_projection(rng, out, d, name=f"layer_{i}", kind="K" if i % 2 == 0 else "V"))
    return AttentionLayerSet(tuple(layers))


def random_task(rng, d, m=1, label="task"):
    return ConceptTask(
        source=random_embedding(rng, d, m, label=label),
        destination=random_embedding(rng, d, m, label=label + "*"),
        label=label,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
