"""Fixture exporter for the K/V weight-editing toolkit.

Produces tensor files in the editor's input format: synthetic SD-shaped
checkpoints, K/V weight slices from real checkpoints, and CLIP text
embeddings, each with a JSON manifest for cross-checking.
"""

from .embeds import (
    DEFAULT_ENCODER,
    EMPTY_TEXT,
    POOLED_SUFFIX,
    EncoderUnavailableError,
    export_embeddings,
)
from .manifest import Manifest, manifest_path_for
from .sd_arch import (
    CONTEXT_DIM,
    CROSS_ATTENTION_BLOCKS,
    SELECTED_KV_PARAMS,
    TOTAL_UNET_PARAMS,
    kv_tensor_shapes,
)
from .slices import export_attention_slices
from .synth import make_synthetic_sd
from .tensorio import FormatError, read_shapes, read_tensors, write_tensors

__version__ = "0.1.0"

__all__ = [
    "CONTEXT_DIM",
    "CROSS_ATTENTION_BLOCKS",
    "DEFAULT_ENCODER",
    "EMPTY_TEXT",
    "EncoderUnavailableError",
    "FormatError",
    "Manifest",
    "POOLED_SUFFIX",
    "SELECTED_KV_PARAMS",
    "TOTAL_UNET_PARAMS",
    "export_attention_slices",
    "export_embeddings",
    "kv_tensor_shapes",
    "make_synthetic_sd",
    "manifest_path_for",
    "read_shapes",
    "read_tensors",
    "write_tensors",
]
