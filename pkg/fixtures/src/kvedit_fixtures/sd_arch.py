"""Stable Diffusion v1.4 U-Net cross-attention geometry, hard-coded.

The shape list is fixed from the public v1.4 architecture rather than
inferred at runtime, so synthetic fixtures and the parameter-fraction check
stay stable. The U-Net has 16 cross-attention blocks; each contributes one
to_k and one to_v projection of shape (channels, 768), where 768 is the
CLIP ViT-L/14 text embedding width.
"""

CONTEXT_DIM = 768

# (tensor name prefix, channel width) for every cross-attention block, in
# the diffusers naming convention. Down path: 320, 320, 640, 640, 1280,
# 1280; mid: 1280; up path: 1280 x3, 640 x3, 320 x3.
CROSS_ATTENTION_BLOCKS = (
    ("down_blocks.0.attentions.0.transformer_blocks.0.attn2", 320),
    ("down_blocks.0.attentions.1.transformer_blocks.0.attn2", 320),
    ("down_blocks.1.attentions.0.transformer_blocks.0.attn2", 640),
    ("down_blocks.1.attentions.1.transformer_blocks.0.attn2", 640),
    ("down_blocks.2.attentions.0.transformer_blocks.0.attn2", 1280),
    ("down_blocks.2.attentions.1.transformer_blocks.0.attn2", 1280),
    ("mid_block.attentions.0.transformer_blocks.0.attn2", 1280),
    ("up_blocks.1.attentions.0.transformer_blocks.0.attn2", 1280),
    ("up_blocks.1.attentions.1.transformer_blocks.0.attn2", 1280),
    ("up_blocks.1.attentions.2.transformer_blocks.0.attn2", 1280),
    ("up_blocks.2.attentions.0.transformer_blocks.0.attn2", 640),
    ("up_blocks.2.attentions.1.transformer_blocks.0.attn2", 640),
    ("up_blocks.2.attentions.2.transformer_blocks.0.attn2", 640),
    ("up_blocks.3.attentions.0.transformer_blocks.0.attn2", 320),
    ("up_blocks.3.attentions.1.transformer_blocks.0.attn2", 320),
    ("up_blocks.3.attentions.2.transformer_blocks.0.attn2", 320),
)

# Full v1.4 U-Net parameter count (all tensors, not just attention); the
# published figure for the 860M-parameter U-Net.
TOTAL_UNET_PARAMS = 859_520_964

SELECTED_KV_PARAMS = 2 * CONTEXT_DIM * sum(w for _, w in CROSS_ATTENTION_BLOCKS)


def kv_tensor_shapes() -> dict[str, tuple[int, int]]:
    """All 32 K/V projection tensor names with their (out, d) shapes."""
    shapes = {}
    for prefix, width in CROSS_ATTENTION_BLOCKS:
        shapes[f"{prefix}.to_k.weight"] = (width, CONTEXT_DIM)
        shapes[f"{prefix}.to_v.weight"] = (width, CONTEXT_DIM)
    return shapes
