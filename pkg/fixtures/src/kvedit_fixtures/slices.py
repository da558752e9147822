"""Export cross-attention K/V weight slices from a real U-Net checkpoint."""

from __future__ import annotations

from .manifest import Manifest, manifest_path_for
from .tensorio import read_shapes, read_tensors, write_tensors

_K_SUFFIX = ".to_k.weight"
_V_SUFFIX = ".to_v.weight"


def _is_kv(name: str) -> bool:
    return "attn2" in name and (name.endswith(_K_SUFFIX) or name.endswith(_V_SUFFIX))


def export_attention_slices(checkpoint_path, output_path) -> Manifest:
    """Copy every cross-attention to_k/to_v weight into a fixture file.

    Names are preserved verbatim so the editor's default selection pattern
    finds them. The manifest records the full checkpoint's parameter count,
    which is what the selected-fraction check divides by.
    """
    shapes = read_shapes(checkpoint_path)
    selected_names = sorted(name for name in shapes if _is_kv(name))
    if not selected_names:
        raise ValueError(
            f"{checkpoint_path}: no cross-attention to_k/to_v tensors found"
        )
    tensors = read_tensors(checkpoint_path)
    write_tensors({name: tensors[name] for name in selected_names}, output_path)

    def count(shape) -> int:
        n = 1
        for s in shape:
            n *= s
        return n

    manifest = Manifest(
        source=str(checkpoint_path),
        tensors={name: list(shapes[name]) for name in selected_names},
        total_unet_params=sum(count(s) for s in shapes.values()),
        selected_kv_params=sum(count(shapes[name]) for name in selected_names),
    )
    manifest.write(manifest_path_for(output_path))
    return manifest
