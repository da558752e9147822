"""Brute-force verification of the closed-form solutions.

Both closed forms (the weight edit and the embedding derivation) minimize
smooth convex quadratics, so an accelerated first-order descent started
from a fixed point must land on the same answer. The minimizer here works
only from objective/gradient evaluations written out longhand from the
objective definitions; it never touches the coefficient matrices the
closed forms are built from. Deterministic by construction: no randomness
anywhere in the optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .derivation import derivation_gradient, derivation_objective, derive_embedding
from .edit import closed_form_edit
from .types import AttentionLayerSet, ConceptTask, Embedding, ProjectionMatrix


@dataclass(frozen=True)
class OracleOutcome:
    solution: np.ndarray
    objective: float
    iterations: int
    converged: bool
    rel_gap_to_closed_form: float
    grad_max: float


@dataclass(frozen=True)
class CompareReport:
    passed: bool
    gap: float
    tol: float
    metric: str = "relative Frobenius gap"

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return f"{verdict}: {self.metric} = {self.gap:.3e} (tol {self.tol:.1e})"


def _minimize(
    x0: np.ndarray,
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    tol: float,
    max_iters: int,
) -> tuple[np.ndarray, int, bool]:
    """Accelerated gradient descent with backtracking line search.

    Nesterov momentum with function-value restart; the local Lipschitz
    estimate is grown by backtracking and relaxed between iterations.
    Converged means the gradient max-norm at the iterate is <= tol.
    """
    x = x0.copy()
    y = x.copy()
    fx = f(x)
    t = 1.0
    L = 1.0
    it = 0
    for it in range(max_iters):
        gx = grad(x)
        if float(np.max(np.abs(gx))) <= tol:
            return x, it, True
        gy = grad(y)
        fy = f(y)
        gy_sq = float(np.sum(gy * gy))
        # Backtrack until the quadratic upper bound holds at y; the slack
        # keeps rounding noise from stalling the search near the optimum.
        slack = 1e-13 * (1.0 + abs(fy))
        accepted = False
        for _ in range(80):
            x_new = y - gy / L
            f_new = f(x_new)
            if f_new <= fy - 0.5 * gy_sq / L + slack:
                accepted = True
                break
            L *= 2.0
        if not accepted:
            break  # numerical floor reached
        if f_new > fx + slack:
            # Momentum overshot: restart from the best point.
            y = x.copy()
            t = 1.0
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, f_new, t_new
        L *= 0.9  # probe for a larger step next round
    return x, it + 1, float(np.max(np.abs(grad(x)))) <= tol


def oracle_edit(
    W_old: ProjectionMatrix,
    erase: Sequence[ConceptTask],
    preserve: Sequence[Embedding],
    lambda1: float,
    lambda2: float,
    tol: float = 1e-9,
    max_iters: int = 20000,
) -> OracleOutcome:
    """Minimize the edit objective over W by descent from W_old."""
    W0 = W_old.W
    erase_pairs = [(t.source.data, t.destination.data) for t in erase]
    preserve_mats = [p.data for p in preserve]

    def f(W: np.ndarray) -> float:
        total = 0.0
        for src, dst in erase_pairs:
            r = W @ src - W0 @ dst
            total += float(np.sum(r * r))
        for p in preserve_mats:
            r = (W - W0) @ p
            total += lambda1 * float(np.sum(r * r))
        dW = W - W0
        return total + lambda2 * float(np.sum(dW * dW))

    def grad(W: np.ndarray) -> np.ndarray:
        g = 2.0 * lambda2 * (W - W0)
        for src, dst in erase_pairs:
            g = g + 2.0 * ((W @ src - W0 @ dst) @ src.T)
        for p in preserve_mats:
            g = g + 2.0 * lambda1 * (((W - W0) @ p) @ p.T)
        return g

    if not erase:
        # Objective already minimal at W_old; nothing to descend.
        closed = closed_form_edit(W_old, erase, preserve, lambda1, lambda2)
        gap = _rel_gap(W0, closed.W)
        return OracleOutcome(W0.copy(), f(W0), 0, True, gap, float(np.max(np.abs(grad(W0)))))

    sol, iters, converged = _minimize(W0, f, grad, tol, max_iters)
    closed = closed_form_edit(W_old, erase, preserve, lambda1, lambda2)
    return OracleOutcome(
        solution=sol,
        objective=f(sol),
        iterations=iters,
        converged=converged,
        rel_gap_to_closed_form=_rel_gap(sol, closed.W),
        grad_max=float(np.max(np.abs(grad(sol)))),
    )


def oracle_derive(
    c: Embedding,
    new_set: AttentionLayerSet,
    old_set: AttentionLayerSet,
    lambda_reg: float,
    tol: float = 1e-10,
    max_iters: int = 200000,
) -> OracleOutcome:
    """Minimize the derivation objective over c' by descent from zero.

    The iteration budget is sized for ill-conditioned lambda = 0 instances
    (condition numbers around 1e6 need ~1e5 accelerated steps); iterations
    on a d-vector are cheap, so the high ceiling costs little.
    """
    pairs = [(new.W, old.W) for new, old in zip(new_set, old_set)]
    targets = [Wo @ c.data for _, Wo in pairs]

    def f(x: np.ndarray) -> float:
        total = lambda_reg * float(np.sum(x * x))
        for (Wn, _), target in zip(pairs, targets):
            r = Wn @ x - target
            total += float(np.sum(r * r))
        return total

    def grad(x: np.ndarray) -> np.ndarray:
        g = 2.0 * lambda_reg * x
        for (Wn, _), target in zip(pairs, targets):
            g = g + 2.0 * (Wn.T @ (Wn @ x - target))
        return g

    x0 = np.zeros_like(c.data)
    sol, iters, converged = _minimize(x0, f, grad, tol, max_iters)
    closed = derive_embedding(c, new_set, old_set, lambda_reg)
    return OracleOutcome(
        solution=sol,
        objective=f(sol),
        iterations=iters,
        converged=converged,
        rel_gap_to_closed_form=_rel_gap(sol, closed.c_prime.data),
        grad_max=float(np.max(np.abs(grad(sol)))),
    )


def _rel_gap(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / denom


def compare(closed: np.ndarray, outcome: OracleOutcome, tol: float) -> CompareReport:
    gap = _rel_gap(outcome.solution, np.asarray(closed, dtype=np.float64))
    return CompareReport(passed=gap <= tol, gap=gap, tol=tol)


# ---------------------------------------------------------------------------
# Randomized certification suites
# ---------------------------------------------------------------------------

@dataclass
class CertificationSummary:
    checks: dict[str, list[int]] = field(default_factory=dict)  # name -> [passed, total]
    failures: list[str] = field(default_factory=list)

    def record(self, name: str, ok: bool, detail: str = "") -> None:
        bucket = self.checks.setdefault(name, [0, 0])
        bucket[1] += 1
        if ok:
            bucket[0] += 1
        else:
            self.failures.append(f"{name}: {detail}")

    @property
    def all_passed(self) -> bool:
        return not self.failures

    def lines(self) -> list[str]:
        out = []
        for name, (passed, total) in self.checks.items():
            out.append(f"{'PASS' if passed == total else 'FAIL'} {name}: {passed}/{total}")
        return out


def _random_layer_pair(rng: np.random.Generator, n_layers: int, d: int):
    """A random 'original' layer set and an edited counterpart."""
    old_layers = []
    for i in range(n_layers):
        out = int(rng.integers(d, 2 * d + 8))
        W = rng.standard_normal((out, d)) / math.sqrt(d)
        old_layers.append(ProjectionMatrix(f"layer_{i}", "K" if i % 2 == 0 else "V", W))
    old_set = AttentionLayerSet(tuple(old_layers))
    src = Embedding(_unit(rng, d), label="src")
    dst = Embedding(_unit(rng, d), label="dst")
    from .edit import edit_layer_set

    new_set = edit_layer_set(old_set, [ConceptTask(src, dst)], (), 0.1, 0.1)
    return old_set, new_set


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def certify_edits(
    n_instances: int = 500,
    seed: int = 2024,
    gap_tol: float = 1e-6,
    corrupt: bool = False,
) -> CertificationSummary:
    """Random-instance certification of the closed-form weight edit.

    ``corrupt`` injects a perturbation into the closed-form answer before
    comparison; the suite must then fail (negative control).
    """
    rng = np.random.default_rng(seed)
    summary = CertificationSummary()
    lambdas = (0.01, 0.1, 1.0)
    for i in range(n_instances):
        d = int(rng.integers(2, 17))
        out = int(rng.integers(2, 33))
        n_erase = int(rng.integers(1, 4))
        n_pres = int(rng.integers(0, 4))
        l1 = float(rng.choice(lambdas))
        l2 = float(rng.choice(lambdas))
        W_old = ProjectionMatrix("w", "K", rng.standard_normal((out, d)) / math.sqrt(d))
        erase = [
            ConceptTask(Embedding(_unit(rng, d)), Embedding(_unit(rng, d)))
            for _ in range(n_erase)
        ]
        preserve = [Embedding(_unit(rng, d)) for _ in range(n_pres)]

        closed = closed_form_edit(W_old, erase, preserve, l1, l2)
        closed_W = closed.W
        if corrupt:
            closed_W = closed_W + 1e-3
        grad_tol = l2 * 1e-8 * (1.0 + float(np.linalg.norm(W_old.W)))
        outcome = oracle_edit(W_old, erase, preserve, l1, l2, tol=grad_tol)

        report = compare(closed_W, outcome, gap_tol)
        summary.record(
            "edit closed form matches descent oracle",
            outcome.converged and report.passed,
            f"instance {i}: converged={outcome.converged}, {report}",
        )
        from .edit import edit_objective

        f_closed = edit_objective(
            ProjectionMatrix("w", "K", closed_W), W_old, erase, preserve, l1, l2
        )
        scale = 1.0 + abs(outcome.objective)
        ok = f_closed <= outcome.objective + 1e-9 * scale
        summary.record(
            "edit closed-form objective <= oracle objective",
            ok,
            f"instance {i}: closed {f_closed:.12e} vs oracle {outcome.objective:.12e}",
        )
    return summary


def certify_derivations(
    n_instances: int = 500,
    seed: int = 4096,
    gap_tol: float = 1e-6,
    corrupt: bool = False,
) -> CertificationSummary:
    """Random-instance certification of the closed-form embedding derivation."""
    rng = np.random.default_rng(seed)
    summary = CertificationSummary()
    lambdas = (0.0, 1e-3, 0.1, 1.0)
    for i in range(n_instances):
        d = int(rng.integers(2, 17))
        n_layers = int(rng.integers(1, 5))
        lam = float(rng.choice(lambdas))
        old_set, new_set = _random_layer_pair(rng, n_layers, d)
        c = Embedding(_unit(rng, d), label="c")

        result = derive_embedding(c, new_set, old_set, lam)
        closed = result.c_prime.data
        if corrupt:
            closed = closed + 1e-3
        outcome = oracle_derive(c, new_set, old_set, lam, tol=1e-11 * (1.0 + d))
        report = compare(closed, outcome, gap_tol)
        summary.record(
            "derivation closed form matches descent oracle",
            outcome.converged and report.passed,
            f"instance {i}: converged={outcome.converged}, {report}",
        )

        g = derivation_gradient(Embedding(closed), c, new_set, old_set, lam)
        g_limit = 1e-8 * (1.0 + float(np.linalg.norm(c.data)))
        summary.record(
            "derivation gradient vanishes at closed form",
            float(np.max(np.abs(g))) <= g_limit,
            f"instance {i}: max |grad| = {np.max(np.abs(g)):.3e} > {g_limit:.3e}",
        )

        point = Embedding(rng.standard_normal((d, 1)))
        g_exact = derivation_gradient(point, c, new_set, old_set, lam)
        g_fd = _finite_difference_gradient(point, c, new_set, old_set, lam)
        rel = float(np.linalg.norm(g_exact - g_fd)) / max(float(np.linalg.norm(g_exact)), 1e-12)
        summary.record(
            "derivation gradient matches finite differences",
            rel <= 1e-4,
            f"instance {i}: rel error {rel:.3e}",
        )
    return summary


def _finite_difference_gradient(
    point: Embedding,
    c: Embedding,
    new_set: AttentionLayerSet,
    old_set: AttentionLayerSet,
    lambda_reg: float,
    step: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of the derivation objective."""
    base = point.data
    g = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        plus = base.copy()
        minus = base.copy()
        plus[idx] += step
        minus[idx] -= step
        f_plus = derivation_objective(Embedding(plus), c, new_set, old_set, lambda_reg)
        f_minus = derivation_objective(Embedding(minus), c, new_set, old_set, lambda_reg)
        g[idx] = (f_plus - f_minus) / (2.0 * step)
    return g
