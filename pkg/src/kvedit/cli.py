"""Batch command-line interface.

Subcommands: edit (full iterative erasure), derive (standalone embedding
derivation), verify (randomized oracle certification), bounds (drift bound
chain over epoch snapshots), info (parameter stats).

Exit codes: 0 ok, 1 usage, 2 data/format error, 3 numerical failure,
4 verification failure. Reports are UTF-8 JSON lines, flushed per record,
so a truncated run leaves a parsable prefix. Flags have config-file
equivalents (--config, JSON, keys = long flag names with dashes as
underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import bound_chain
from .derivation import derive_embedding
from .driver import EraseSpec, iterative_erase
from .errors import KvEditError, SelectionError, TensorFileError
from .oracle import certify_derivations, certify_edits
from .tensorfile import (
    SelectionPattern,
    TensorFile,
    TensorEntry,
    encode_values,
    merge_back,
    model_stats,
    read_tensor_file,
    select_cross_attention,
    write_tensor_file,
)
from .types import ConceptTask, EditConfig, Embedding

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4

POOLED_SUFFIX = "::pooled"
DEFAULT_DESTINATION = " "  # the empty-text embedding label


class _Parser(argparse.ArgumentParser):
    def exit(self, status=0, message=None):  # argparse uses 2 for usage errors
        super().exit(EXIT_USAGE if status else 0, message)


def _load_embedding(file: TensorFile, label: str, pooled: bool) -> Embedding:
    name = label + POOLED_SUFFIX if pooled else label
    if name not in file.entries:
        raise SelectionError(
            f"embedding {name!r} not found; available: {sorted(file.entries)[:20]}"
        )
    values = file.tensor(name)
    if values.ndim == 1:
        data = values[:, None]
    elif values.ndim == 2:
        data = values.T  # stored as [tokens, d]
    else:
        raise SelectionError(f"embedding {name!r} must be 1-D or 2-D, got {values.ndim}-D")
    return Embedding(data, label=label)


def _pattern_from_args(args) -> SelectionPattern:
    return SelectionPattern(
        include=tuple(args.include),
        k_suffix=args.k_suffix,
        v_suffix=args.v_suffix,
        transpose=args.transpose,
    )


def _config_from_args(args) -> EditConfig:
    overrides = {}
    for key, attr in (
        ("lambda1", "lambda1"),
        ("lambda2", "lambda2"),
        ("lambda_reg", "lambda_reg"),
        ("epochs", "epochs"),
    ):
        value = getattr(args, attr)
        if value is not None:
            overrides[key] = value
    return EditConfig.preset(args.preset, **overrides)


def _spec_from_args(args, emb_file: TensorFile) -> EraseSpec:
    destinations = args.destination or [DEFAULT_DESTINATION]
    if len(destinations) == 1:
        destinations = destinations * len(args.erase)
    if len(destinations) != len(args.erase):
        raise SelectionError(
            f"{len(args.erase)} erase labels but {len(destinations)} destination labels"
        )
    tasks = tuple(
        ConceptTask(
            source=_load_embedding(emb_file, src, args.pooled),
            destination=_load_embedding(emb_file, dst, args.pooled),
            label=src,
        )
        for src, dst in zip(args.erase, destinations)
    )
    preserve = tuple(
        _load_embedding(emb_file, label, args.pooled) for label in (args.preserve or [])
    )
    return EraseSpec(tasks=tasks, preserve=preserve)


def _write_report_line(fh, record: dict) -> None:
    fh.write(json.dumps(record, sort_keys=True) + "\n")
    fh.flush()


def cmd_edit(args) -> int:
    checkpoint = read_tensor_file(args.checkpoint)
    emb_file = read_tensor_file(args.embeddings)
    pattern = _pattern_from_args(args)
    layers = select_cross_attention(checkpoint, pattern)
    spec = _spec_from_args(args, emb_file)
    config = _config_from_args(args)

    final, reports, snapshots = iterative_erase(layers, spec, config)

    merged = merge_back(final, checkpoint)
    write_tensor_file(merged, args.output)

    if args.snapshot_dir:
        snap_dir = Path(args.snapshot_dir)
        snap_dir.mkdir(parents=True, exist_ok=True)
        for epoch, snapshot in enumerate(snapshots):
            write_tensor_file(
                merge_back(snapshot, checkpoint), snap_dir / f"epoch_{epoch:04d}.safetensors"
            )

    report_path = args.report or (str(args.output) + ".report.jsonl")
    with open(report_path, "w", encoding="utf-8") as fh:
        for report in reports:
            total_drift = float(sum(v for _, v in report.drift_samples))
            for record in report.per_task:
                _write_report_line(
                    fh,
                    {
                        "epoch": report.epoch,
                        "task": record.label,
                        "residual": record.derivation_residual,
                        "c_prime_norm": record.c_prime_norm,
                        "drift": total_drift,
                        "wall_time_s": report.wall_time_s,
                    },
                )
    print(f"edited {len(final)} matrices over {config.epochs} epochs -> {args.output}")
    return EXIT_OK


def cmd_derive(args) -> int:
    original = select_cross_attention(read_tensor_file(args.original), _pattern_from_args(args))
    edited = select_cross_attention(read_tensor_file(args.edited), _pattern_from_args(args))
    emb_file = read_tensor_file(args.embeddings)

    entries = {}
    records = []
    for label in args.concepts:
        c = _load_embedding(emb_file, label, args.pooled)
        result = derive_embedding(c, edited, original, args.lambda_reg)
        entries[label] = TensorEntry(
            dtype="F64",
            shape=tuple(result.c_prime.data.T.shape),
            raw=encode_values(result.c_prime.data.T, "F64"),
        )
        records.append(
            {
                "task": label,
                "residual": result.objective_value,
                "c_prime_norm": float(np.linalg.norm(result.c_prime.data)),
                "lambda": result.lambda_used,
            }
        )
    write_tensor_file(TensorFile(entries), args.output)
    report_path = args.report or (str(args.output) + ".report.jsonl")
    with open(report_path, "w", encoding="utf-8") as fh:
        for record in records:
            _write_report_line(fh, record)
    print(f"derived {len(records)} embeddings -> {args.output}")
    return EXIT_OK


def cmd_verify(args) -> int:
    failed = False
    if args.suite in ("edit", "all"):
        summary = certify_edits(args.instances, seed=args.seed, corrupt=args.corrupt)
        for line in summary.lines():
            print(line)
        failed |= not summary.all_passed
    if args.suite in ("derive", "all"):
        summary = certify_derivations(args.instances, seed=args.seed, corrupt=args.corrupt)
        for line in summary.lines():
            print(line)
        failed |= not summary.all_passed
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_bounds(args) -> int:
    checkpoint = read_tensor_file(args.original)
    pattern = _pattern_from_args(args)
    original = select_cross_attention(checkpoint, pattern)
    emb_file = read_tensor_file(args.embeddings)
    spec = _spec_from_args(args, emb_file)

    snap_dir = Path(args.snapshot_dir)
    snapshot_paths = sorted(snap_dir.glob("epoch_*.safetensors"))
    if not snapshot_paths:
        raise SelectionError(f"no epoch snapshots found in {snap_dir}")
    snapshots = [
        select_cross_attention(read_tensor_file(p), pattern) for p in snapshot_paths
    ]

    if args.probe:
        probe = _load_embedding(emb_file, args.probe, args.pooled)
    elif spec.preserve:
        probe = spec.preserve[0]
    else:
        probe = spec.tasks[0].destination

    all_ok = True
    out = open(args.report, "w", encoding="utf-8") if args.report else sys.stdout
    try:
        for t in range(1, len(snapshots)):
            base = snapshots[t - 1]
            pairs = []
            for task in spec.tasks:
                result = derive_embedding(task.source, base, original, args.lambda_reg)
                pairs.append((result.c_prime, task.destination))
            for layer in base:
                report = bound_chain(
                    layer, pairs, spec.preserve, args.lambda1, args.lambda2, probe
                )
                all_ok &= report.chain_ok
                _write_report_line(
                    out,
                    {
                        "epoch": t,
                        "layer": layer.name,
                        "F": report.F,
                        "F1": report.F1,
                        "F2": report.F2,
                        "F3": report.F3,
                        "F3_upper": report.F3_upper,
                        "U_inv_frob_sq": report.U_inv_frob_sq,
                        "W_new1_frob_sq": report.W_new1_frob_sq,
                        "d_norm_sq": report.d_norm_sq,
                        "chain_ok": report.chain_ok,
                    },
                )
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if all_ok else EXIT_VERIFY


def cmd_info(args) -> int:
    stats = model_stats(read_tensor_file(args.checkpoint), _pattern_from_args(args))
    print(
        json.dumps(
            {
                "total_params": stats.total_params,
                "selected_params": stats.selected_params,
                "fraction": stats.fraction,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def _add_pattern_args(parser) -> None:
    parser.add_argument("--include", action="append", default=None,
                        help="substring a selected tensor name must contain (repeatable)")
    parser.add_argument("--k-suffix", default=None, help="name suffix marking K projections")
    parser.add_argument("--v-suffix", default=None, help="name suffix marking V projections")
    parser.add_argument("--transpose", action="store_true", default=None,
                        help="checkpoint stores projections as d x out")


def _add_concept_args(parser) -> None:
    parser.add_argument("--embeddings", required=True, help="embeddings tensor file")
    parser.add_argument("--erase", action="append", required=True,
                        help="label of a concept to erase (repeatable)")
    parser.add_argument("--destination", action="append", default=None,
                        help="destination label per erase concept (default: empty text)")
    parser.add_argument("--preserve", action="append", default=None,
                        help="label of a concept to preserve (repeatable)")
    parser.add_argument("--pooled", action="store_true", default=None,
                        help="use pooled embedding variants")


def _add_hyper_args(parser) -> None:
    parser.add_argument("--preset", default=None,
                        choices=["unsafe", "artistic", "object", "custom"])
    parser.add_argument("--lambda1", type=float, default=None)
    parser.add_argument("--lambda2", type=float, default=None)
    parser.add_argument("--lambda-reg", dest="lambda_reg", type=float, default=None)
    parser.add_argument("--epochs", type=int, default=None)


_FLAG_DEFAULTS = {
    "include": ["attn2"],
    "k_suffix": ".to_k.weight",
    "v_suffix": ".to_v.weight",
    "transpose": False,
    "destination": None,
    "preserve": None,
    "pooled": False,
    "preset": "custom",
    "lambda1": None,
    "lambda2": None,
    "lambda_reg": None,
    "epochs": None,
    "probe": None,
    "report": None,
    "snapshot_dir": None,
}


def _apply_config_file(args) -> None:
    """Fill unset flags from the JSON config file, then builtin defaults."""
    file_values = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
    for key, default in _FLAG_DEFAULTS.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) is None:
            if key in file_values:
                setattr(args, key, file_values[key])
            else:
                setattr(args, key, default)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kvedit",
                     description="Closed-form concept erasure for cross-attention K/V weights")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_edit = sub.add_parser("edit", help="erase concepts from a checkpoint")
    p_edit.add_argument("--checkpoint", required=True)
    p_edit.add_argument("--output", required=True)
    p_edit.add_argument("--snapshot-dir", dest="snapshot_dir", default=None)
    p_edit.add_argument("--report", default=None)
    p_edit.add_argument("--config", default=None, help="JSON config file with flag defaults")
    _add_concept_args(p_edit)
    _add_hyper_args(p_edit)
    _add_pattern_args(p_edit)
    p_edit.set_defaults(func=cmd_edit)

    p_der = sub.add_parser("derive", help="derive adversarial embeddings for edited weights")
    p_der.add_argument("--original", required=True)
    p_der.add_argument("--edited", required=True)
    p_der.add_argument("--embeddings", required=True)
    p_der.add_argument("--concepts", action="append", required=True)
    p_der.add_argument("--lambda-reg", dest="lambda_reg", type=float, default=None)
    p_der.add_argument("--pooled", action="store_true", default=None)
    p_der.add_argument("--output", required=True)
    p_der.add_argument("--report", default=None)
    p_der.add_argument("--config", default=None)
    _add_pattern_args(p_der)
    p_der.set_defaults(func=cmd_derive)

    p_ver = sub.add_parser("verify", help="run the randomized certification suite")
    p_ver.add_argument("--instances", type=int, default=200)
    p_ver.add_argument("--seed", type=int, default=2024)
    p_ver.add_argument("--suite", default="all", choices=["edit", "derive", "all"])
    p_ver.add_argument("--corrupt", action="store_true", default=False,
                       help="negative control: corrupt the closed form; the suite must fail")
    p_ver.set_defaults(func=cmd_verify)

    p_bnd = sub.add_parser("bounds", help="drift bound chain per epoch snapshot")
    p_bnd.add_argument("--original", required=True, help="pre-edit checkpoint")
    p_bnd.add_argument("--snapshot-dir", dest="snapshot_dir", required=True)
    p_bnd.add_argument("--probe", default=None, help="unrelated concept label to probe drift")
    p_bnd.add_argument("--report", default=None)
    p_bnd.add_argument("--config", default=None)
    _add_concept_args(p_bnd)
    _add_hyper_args(p_bnd)
    _add_pattern_args(p_bnd)
    p_bnd.set_defaults(func=cmd_bounds)

    p_info = sub.add_parser("info", help="parameter counts and selected fraction")
    p_info.add_argument("--checkpoint", required=True)
    p_info.add_argument("--config", default=None)
    _add_pattern_args(p_info)
    p_info.set_defaults(func=cmd_info)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_config_file(args)
    # derive/bounds consume the lambdas directly; edit routes them through
    # EditConfig so presets keep their own lambda_reg when the flag is unset.
    if args.command in ("derive", "bounds"):
        if getattr(args, "lambda1", None) is None:
            args.lambda1 = 0.1
        if getattr(args, "lambda2", None) is None:
            args.lambda2 = 0.1
        if args.lambda_reg is None:
            args.lambda_reg = 0.1
    try:
        return args.func(args)
    except (TensorFileError, SelectionError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return EXIT_DATA
    except KvEditError as exc:
        print(f"numerical error ({args.command}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
