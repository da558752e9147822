"""Synthetic SD-shaped checkpoint fixtures for benchmarks and integration."""

from __future__ import annotations

import numpy as np

from .manifest import Manifest, manifest_path_for
from .sd_arch import SELECTED_KV_PARAMS, TOTAL_UNET_PARAMS, kv_tensor_shapes
from .tensorio import write_tensors


def make_synthetic_sd(output_path, seed: int) -> Manifest:
    """Write random matrices in the exact v1.4 cross-attention geometry.

    Deterministic from the seed: same seed, same bytes. The manifest's
    total parameter count is the real U-Net's, so fraction checks against
    the synthetic file behave like checks against a real export.
    """
    rng = np.random.default_rng(seed)
    shapes = kv_tensor_shapes()
    tensors = {}
    for name in sorted(shapes):
        out, d = shapes[name]
        tensors[name] = (rng.standard_normal((out, d)) / np.sqrt(d)).astype(np.float32)
    write_tensors(tensors, output_path, dtype="F32")
    manifest = Manifest(
        source=f"synthetic(seed={seed})",
        tensors={name: list(shape) for name, shape in shapes.items()},
        total_unet_params=TOTAL_UNET_PARAMS,
        selected_kv_params=SELECTED_KV_PARAMS,
    )
    manifest.write(manifest_path_for(output_path))
    return manifest
