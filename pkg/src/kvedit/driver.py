"""Iterative derive-then-erase loop over a layer set.

Epoch 0 applies the closed-form edit with the user's original erase tasks.
Each later epoch derives, for every task, the embedding that re-expresses
the erased concept in the current weights (solved against the ORIGINAL
pre-edit weights), then erases those derived embeddings with the current
weights as the edit's base. Derived embeddings inherit their task's
original destination. The loop is a strict fold of ``epoch_step``, so a
T-epoch run is bitwise-reproducible from the individual steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import BoundReport
from .derivation import derive_embedding
from .edit import drift, edit_layer_set, project_kv
from .errors import KvEditError
from .types import AttentionLayerSet, ConceptTask, EditConfig, Embedding


@dataclass(frozen=True)
class EraseSpec:
    tasks: tuple[ConceptTask, ...]
    preserve: tuple[Embedding, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "preserve", tuple(self.preserve))
        if not self.tasks:
            raise KvEditError("erase spec needs at least one task")


@dataclass(frozen=True)
class TaskRecord:
    label: str
    c_prime_norm: float
    derivation_residual: float


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    per_task: tuple[TaskRecord, ...]
    drift_samples: tuple[tuple[str, float], ...]
    wall_time_s: float
    bound_chain: Optional[BoundReport] = None


@dataclass(frozen=True)
class EpochState:
    current: AttentionLayerSet
    original: AttentionLayerSet
    spec: EraseSpec
    config: EditConfig


def _drift_samples(
    new_set: AttentionLayerSet,
    prev_set: AttentionLayerSet,
    probes: Sequence[Embedding],
) -> tuple[tuple[str, float], ...]:
    samples = []
    for probe in probes:
        total = sum(drift(new, prev, probe) for new, prev in zip(new_set, prev_set))
        samples.append((probe.label, float(total)))
    return tuple(samples)


def epoch_step(state: EpochState, epoch_index: int) -> tuple[AttentionLayerSet, EpochReport]:
    """One derive-then-erase refinement step (epoch_index >= 1)."""
    if epoch_index < 1:
        raise KvEditError(f"epoch_step index must be >= 1, got {epoch_index}")
    start = time.perf_counter()
    spec, config = state.spec, state.config
    derived_tasks = []
    records = []
    try:
        for task in spec.tasks:
            result = derive_embedding(
                task.source, state.current, state.original, config.lambda_reg
            )
            derived_tasks.append(
                ConceptTask(
                    source=result.c_prime,
                    destination=task.destination,
                    label=task.label,
                )
            )
            records.append(
                TaskRecord(
                    label=task.label,
                    c_prime_norm=float(np.linalg.norm(result.c_prime.data)),
                    derivation_residual=result.objective_value,
                )
            )
        new_set = edit_layer_set(
            state.current, derived_tasks, spec.preserve, config.lambda1, config.lambda2
        )
    except KvEditError as exc:
        raise KvEditError(f"epoch {epoch_index}: {exc}") from exc
    report = EpochReport(
        epoch=epoch_index,
        per_task=tuple(records),
        drift_samples=_drift_samples(new_set, state.current, spec.preserve),
        wall_time_s=time.perf_counter() - start,
    )
    return new_set, report


def _epoch0(
    layers: AttentionLayerSet, spec: EraseSpec, config: EditConfig
) -> tuple[AttentionLayerSet, EpochReport]:
    start = time.perf_counter()
    edited = edit_layer_set(layers, spec.tasks, spec.preserve, config.lambda1, config.lambda2)
    records = []
    for task in spec.tasks:
        # Epoch 0 has no derived embedding; record the source norm and the
        # erasure residual of the preliminary edit instead.
        residual = 0.0
        for new, old in zip(edited, layers):
            r = project_kv(new, task.source) - project_kv(old, task.destination)
            residual += float(np.sum(r * r))
        records.append(
            TaskRecord(
                label=task.label,
                c_prime_norm=float(np.linalg.norm(task.source.data)),
                derivation_residual=residual,
            )
        )
    report = EpochReport(
        epoch=0,
        per_task=tuple(records),
        drift_samples=_drift_samples(edited, layers, spec.preserve),
        wall_time_s=time.perf_counter() - start,
    )
    return edited, report


def iterative_erase(
    layers: AttentionLayerSet, spec: EraseSpec, config: EditConfig
) -> tuple[AttentionLayerSet, list[EpochReport], list[AttentionLayerSet]]:
    """Run the full loop: preliminary edit plus ``config.epochs`` refinements.

    Returns the final layer set, one report per epoch (epoch 0 first), and
    the per-epoch snapshots (snapshot[t] is the state after epoch t).
    """
    current, report = _epoch0(layers, spec, config)
    reports = [report]
    snapshots = [current]
    for t in range(1, config.epochs + 1):
        state = EpochState(current=current, original=layers, spec=spec, config=config)
        current, report = epoch_step(state, t)
        reports.append(report)
        snapshots.append(current)
    return current, reports, snapshots


@dataclass(frozen=True)
class TaskFidelity:
    label: str
    residual_before: float  # ||W_old c - W_old c*||^2 summed over layers
    residual_after: float  # ||W_new c - W_old c*||^2 summed over layers


@dataclass(frozen=True)
class FidelityReport:
    per_task: tuple[TaskFidelity, ...]
    per_probe_drift: tuple[tuple[str, float], ...]
    per_layer_frob_dist: tuple[tuple[str, float], ...]


def fidelity_report(
    original: AttentionLayerSet,
    edited: AttentionLayerSet,
    spec: EraseSpec,
    probes: Sequence[Embedding] = (),
) -> FidelityReport:
    """Quantify erasure residuals and collateral movement of an edit."""
    from .derivation import check_aligned

    check_aligned(edited, original)
    per_task = []
    for task in spec.tasks:
        before = 0.0
        after = 0.0
        for new, old in zip(edited, original):
            target = project_kv(old, task.destination)
            rb = project_kv(old, task.source) - target
            ra = project_kv(new, task.source) - target
            before += float(np.sum(rb * rb))
            after += float(np.sum(ra * ra))
        per_task.append(
            TaskFidelity(label=task.label, residual_before=before, residual_after=after)
        )
    per_layer = tuple(
        (new.name, float(np.linalg.norm(new.W - old.W)))
        for new, old in zip(edited, original)
    )
    return FidelityReport(
        per_task=tuple(per_task),
        per_probe_drift=_drift_samples(edited, original, probes),
        per_layer_frob_dist=per_layer,
    )
