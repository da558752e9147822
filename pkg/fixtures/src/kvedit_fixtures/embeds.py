"""Export CLIP text embeddings (per-token and pooled) for concept labels.

Requires a locally available text encoder (transformers + torch with cached
weights); there is no download logic here. Each label produces a [tokens, d]
tensor named by the label and a pooled [d] variant named "<label>::pooled".
The empty-text label " " is always included — it is the editor's default
destination concept.
"""

from __future__ import annotations

import numpy as np

from .manifest import Manifest, manifest_path_for
from .tensorio import write_tensors

EMPTY_TEXT = " "
POOLED_SUFFIX = "::pooled"
DEFAULT_ENCODER = "openai/clip-vit-large-patch14"


class EncoderUnavailableError(RuntimeError):
    pass


def _load_encoder(reference: str):
    try:
        import torch  # noqa: F401
        from transformers import CLIPTextModel, CLIPTokenizer
    except ImportError as exc:
        raise EncoderUnavailableError(
            "exporting embeddings needs torch and transformers installed "
            f"with the {reference!r} weights cached locally"
        ) from exc
    try:
        tokenizer = CLIPTokenizer.from_pretrained(reference, local_files_only=True)
        model = CLIPTextModel.from_pretrained(reference, local_files_only=True)
    except Exception as exc:
        raise EncoderUnavailableError(
            f"could not load {reference!r} from the local cache: {exc}"
        ) from exc
    model.eval()
    return tokenizer, model


def export_embeddings(
    labels, output_path, encoder_reference: str = DEFAULT_ENCODER
) -> Manifest:
    import torch

    tokenizer, model = _load_encoder(encoder_reference)
    labels = list(dict.fromkeys([*labels, EMPTY_TEXT]))  # dedupe, keep order

    tensors: dict[str, np.ndarray] = {}
    token_counts: dict[str, int] = {}
    with torch.no_grad():
        for label in labels:
            batch = tokenizer(
                label,
                padding="max_length",
                max_length=tokenizer.model_max_length,
                truncation=True,
                return_tensors="pt",
            )
            out = model(**batch)
            tokens = out.last_hidden_state[0].numpy().astype(np.float64)
            pooled = out.pooler_output[0].numpy().astype(np.float64)
            tensors[label] = tokens  # [tokens, d]
            tensors[label + POOLED_SUFFIX] = pooled  # [d]
            token_counts[label] = int(batch["attention_mask"][0].sum())

    write_tensors(tensors, output_path, dtype="F64")
    manifest = Manifest(
        source=encoder_reference,
        tensors={name: list(t.shape) for name, t in tensors.items()},
        embeddings=token_counts,
    )
    manifest.write(manifest_path_for(output_path))
    return manifest
