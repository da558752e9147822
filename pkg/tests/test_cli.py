"""End-to-end command-line runs on small synthetic checkpoints."""

import json

import numpy as np
import pytest

from kvedit import (
    ConceptTask,
    SelectionPattern,
    TensorEntry,
    TensorFile,
    edit_layer_set,
    read_tensor_file,
    select_cross_attention,
    write_tensor_file,
)
from kvedit.cli import main
from kvedit.tensorfile import encode_values

D = 6


def _entry(values):
    values = np.asarray(values, dtype=np.float64)
    return TensorEntry("F64", tuple(values.shape), encode_values(values, "F64"))


def make_checkpoint(path, rng, n_blocks=2, out=8, d=D):
    entries = {}
    for b in range(n_blocks):
        entries[f"blocks.{b}.attn2.to_k.weight"] = _entry(rng.standard_normal((out, d)))
        entries[f"blocks.{b}.attn2.to_v.weight"] = _entry(rng.standard_normal((out, d)))
    entries["blocks.0.ff.weight"] = _entry(rng.standard_normal((out, out)))
    write_tensor_file(TensorFile(entries), path)


def make_embeddings(path, rng, labels=("cat", "dog", " "), d=D):
    entries = {}
    for label in labels:
        vec = rng.standard_normal(d)
        entries[label] = _entry(vec)
        entries[label + "::pooled"] = _entry(vec)
    write_tensor_file(TensorFile(entries), path)


@pytest.fixture
def workspace(tmp_path, rng):
    ckpt = tmp_path / "model.safetensors"
    embs = tmp_path / "embeddings.safetensors"
    make_checkpoint(ckpt, rng)
    make_embeddings(embs, rng)
    return tmp_path, ckpt, embs


class TestEdit:
    def test_zero_epochs_equals_plain_edit(self, workspace, rng):
        tmp, ckpt, embs = workspace
        out = tmp / "out.safetensors"
        code = main([
            "edit", "--checkpoint", str(ckpt), "--output", str(out),
            "--embeddings", str(embs), "--erase", "cat", "--preserve", "dog",
            "--epochs", "0", "--lambda1", "0.1", "--lambda2", "0.1",
        ])
        assert code == 0

        ckpt_file = read_tensor_file(ckpt)
        emb_file = read_tensor_file(embs)
        layers = select_cross_attention(ckpt_file, SelectionPattern())
        cat = emb_file.tensor("cat")[:, None]
        dog = emb_file.tensor("dog")[:, None]
        blank = emb_file.tensor(" ")[:, None]
        from kvedit import Embedding
        task = ConceptTask(Embedding(cat, "cat"), Embedding(blank, " "), "cat")
        expected = edit_layer_set(layers, [task], [Embedding(dog, "dog")], 0.1, 0.1)

        got = select_cross_attention(read_tensor_file(out), SelectionPattern())
        for e, g in zip(expected, got):
            np.testing.assert_array_equal(e.W, g.W)

    def test_unsafe_preset_emits_six_epoch_records(self, workspace):
        tmp, ckpt, embs = workspace
        out = tmp / "out.safetensors"
        report = tmp / "run.jsonl"
        snaps = tmp / "snaps"
        code = main([
            "edit", "--checkpoint", str(ckpt), "--output", str(out),
            "--embeddings", str(embs), "--erase", "cat",
            "--preset", "unsafe", "--report", str(report),
            "--snapshot-dir", str(snaps),
        ])
        assert code == 0
        records = [json.loads(line) for line in report.read_text().splitlines()]
        assert [r["epoch"] for r in records] == [0, 1, 2, 3, 4, 5]
        assert all(r["task"] == "cat" for r in records)
        for key in ("residual", "c_prime_norm", "drift", "wall_time_s"):
            assert all(key in r for r in records)
        assert sorted(p.name for p in snaps.iterdir()) == [
            f"epoch_{t:04d}.safetensors" for t in range(6)
        ]

    def test_repeat_run_is_deterministic(self, workspace):
        tmp, ckpt, embs = workspace
        outs, reports = [], []
        for tag in ("a", "b"):
            out = tmp / f"out_{tag}.safetensors"
            report = tmp / f"report_{tag}.jsonl"
            code = main([
                "edit", "--checkpoint", str(ckpt), "--output", str(out),
                "--embeddings", str(embs), "--erase", "cat",
                "--preset", "unsafe", "--report", str(report),
            ])
            assert code == 0
            outs.append(out.read_bytes())
            # Wall time is the one legitimately nondeterministic field.
            recs = [json.loads(l) for l in report.read_text().splitlines()]
            for r in recs:
                r.pop("wall_time_s")
            reports.append(recs)
        assert outs[0] == outs[1]
        assert reports[0] == reports[1]

    def test_pooled_flag_selects_pooled_variants(self, workspace):
        tmp, ckpt, embs = workspace
        out = tmp / "out.safetensors"
        code = main([
            "edit", "--checkpoint", str(ckpt), "--output", str(out),
            "--embeddings", str(embs), "--erase", "cat", "--pooled",
            "--epochs", "0",
        ])
        assert code == 0

    def test_config_file_supplies_defaults_and_flags_win(self, workspace):
        tmp, ckpt, embs = workspace
        cfg = tmp / "cfg.json"
        cfg.write_text(json.dumps({"preset": "unsafe", "epochs": 1}))
        out = tmp / "out.safetensors"
        report = tmp / "r.jsonl"
        code = main([
            "edit", "--checkpoint", str(ckpt), "--output", str(out),
            "--embeddings", str(embs), "--erase", "cat",
            "--config", str(cfg), "--epochs", "2", "--report", str(report),
        ])
        assert code == 0
        records = [json.loads(l) for l in report.read_text().splitlines()]
        # flag --epochs 2 overrides the config file's 1
        assert [r["epoch"] for r in records] == [0, 1, 2]


class TestDerive:
    def test_identity_model_returns_input_embedding(self, workspace):
        tmp, ckpt, embs = workspace
        out = tmp / "derived.safetensors"
        code = main([
            "derive", "--original", str(ckpt), "--edited", str(ckpt),
            "--embeddings", str(embs), "--concepts", "cat",
            "--lambda-reg", "0", "--output", str(out),
        ])
        assert code == 0
        derived = read_tensor_file(out).tensor("cat")  # stored [m, d]
        original = read_tensor_file(embs).tensor("cat")
        np.testing.assert_allclose(derived[0], original, rtol=1e-10)

    def test_matches_library_call(self, workspace, rng):
        tmp, ckpt, embs = workspace
        edited_path = tmp / "edited.safetensors"
        out = tmp / "derived.safetensors"
        assert main([
            "edit", "--checkpoint", str(ckpt), "--output", str(edited_path),
            "--embeddings", str(embs), "--erase", "cat", "--epochs", "0",
            "--lambda1", "0.1", "--lambda2", "0.1",
        ]) == 0
        assert main([
            "derive", "--original", str(ckpt), "--edited", str(edited_path),
            "--embeddings", str(embs), "--concepts", "cat",
            "--lambda-reg", "0.1", "--output", str(out),
        ]) == 0

        from kvedit import Embedding, derive_embedding
        original = select_cross_attention(read_tensor_file(ckpt), SelectionPattern())
        edited = select_cross_attention(read_tensor_file(edited_path), SelectionPattern())
        c = Embedding(read_tensor_file(embs).tensor("cat")[:, None], "cat")
        expected = derive_embedding(c, edited, original, 0.1)
        got = read_tensor_file(out).tensor("cat").T
        np.testing.assert_array_equal(got, expected.c_prime.data)


class TestVerify:
    def test_small_suite_passes(self, capsys):
        assert main(["verify", "--instances", "20", "--seed", "7"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out or "pass" in out

    def test_corrupt_negative_control_fails(self):
        assert main(["verify", "--instances", "10", "--seed", "7", "--corrupt"]) == 4


class TestBounds:
    def test_chain_over_snapshots(self, workspace, capsys):
        tmp, ckpt, embs = workspace
        out = tmp / "out.safetensors"
        snaps = tmp / "snaps"
        report = tmp / "bounds.jsonl"
        assert main([
            "edit", "--checkpoint", str(ckpt), "--output", str(out),
            "--embeddings", str(embs), "--erase", "cat", "--preserve", "dog",
            "--preset", "unsafe", "--snapshot-dir", str(snaps),
        ]) == 0
        code = main([
            "bounds", "--original", str(ckpt), "--snapshot-dir", str(snaps),
            "--embeddings", str(embs), "--erase", "cat", "--preserve", "dog",
        ])
        assert code == 0
        records = [json.loads(l) for l in capsys.readouterr().out.splitlines()
                   if l.startswith("{")]
        # 5 iterative epochs x 4 selected matrices
        assert len(records) == 20
        assert all(r["chain_ok"] for r in records)

    def test_missing_snapshot_dir_is_data_error(self, workspace):
        tmp, ckpt, embs = workspace
        code = main([
            "bounds", "--original", str(ckpt), "--snapshot-dir", str(tmp / "nope"),
            "--embeddings", str(embs), "--erase", "cat",
        ])
        assert code == 2


class TestInfoAndExitCodes:
    def test_info_reports_fraction(self, workspace, capsys):
        tmp, ckpt, embs = workspace
        assert main(["info", "--checkpoint", str(ckpt)]) == 0
        stats = json.loads(capsys.readouterr().out)
        # 4 selected 8x6 matrices of 4*48 + 64 total params
        assert stats["selected_params"] == 4 * 48
        assert stats["total_params"] == 4 * 48 + 64
        assert stats["fraction"] == pytest.approx(192 / 256)

    def test_usage_error_exits_1(self):
        with pytest.raises(SystemExit) as err:
            main(["edit", "--checkpoint", "x"])  # missing required flags
        assert err.value.code == 1

    def test_missing_file_exits_2(self, tmp_path):
        code = main(["info", "--checkpoint", str(tmp_path / "absent.safetensors")])
        assert code == 2

    def test_unknown_label_exits_2(self, workspace):
        tmp, ckpt, embs = workspace
        code = main([
            "edit", "--checkpoint", str(ckpt), "--output", str(tmp / "o.st"),
            "--embeddings", str(embs), "--erase", "unicorn",
        ])
        assert code == 2

    def test_singular_problem_exits_3(self, workspace):
        tmp, ckpt, embs = workspace
        # lambda1 = lambda2 = 0 with a single rank-1 task makes the
        # denominator singular.
        code = main([
            "edit", "--checkpoint", str(ckpt), "--output", str(tmp / "o.st"),
            "--embeddings", str(embs), "--erase", "cat",
            "--epochs", "0", "--lambda1", "0", "--lambda2", "0",
        ])
        assert code == 3
