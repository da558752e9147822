"""Command line: kvedit-fixtures {synthetic, slices, embeddings}."""

from __future__ import annotations

import argparse
import sys

from .embeds import DEFAULT_ENCODER, EncoderUnavailableError, export_embeddings
from .slices import export_attention_slices
from .synth import make_synthetic_sd
from .tensorio import FormatError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kvedit-fixtures",
        description="Export tensor-file fixtures for the K/V weight editor",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_syn = sub.add_parser("synthetic", help="SD-shaped random checkpoint")
    p_syn.add_argument("--output", required=True)
    p_syn.add_argument("--seed", type=int, default=0)

    p_sli = sub.add_parser("slices", help="extract K/V weights from a real checkpoint")
    p_sli.add_argument("--checkpoint", required=True)
    p_sli.add_argument("--output", required=True)

    p_emb = sub.add_parser("embeddings", help="export CLIP text embeddings")
    p_emb.add_argument("--label", action="append", required=True,
                       help="concept label to encode (repeatable)")
    p_emb.add_argument("--output", required=True)
    p_emb.add_argument("--encoder", default=DEFAULT_ENCODER)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synthetic":
            manifest = make_synthetic_sd(args.output, args.seed)
        elif args.command == "slices":
            manifest = export_attention_slices(args.checkpoint, args.output)
        else:
            manifest = export_embeddings(args.label, args.output, args.encoder)
    except (FormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EncoderUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(manifest.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
