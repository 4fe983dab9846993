"""End-to-end CLI behavior: flags, files, exit codes, determinism."""

import hashlib
import json
from pathlib import Path

import pytest

from cogcn.cli import main


def run(argv):
    return main([str(a) for a in argv])


def dir_digest(path, exclude=("run_manifest.json",)):
    """Stable content hash of a directory tree, minus excluded names."""
    digest = hashlib.sha256()
    for file in sorted(Path(path).rglob("*")):
        if file.is_file() and file.name not in exclude:
            digest.update(file.name.encode())
            digest.update(file.read_bytes())
    return digest.hexdigest()


SYNTH_ARGS = [
    "synth", "--classes", 4, "--speakers", 8, "--utts", 20, "--noise", 0.3,
    "--seed", 7, "--dim", 6, "--frames-lo", 4, "--frames-hi", 8,
]


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert run(SYNTH_ARGS + ["-o", out]) == 0
    return out


@pytest.fixture
def trained(tmp_path, data_dir):
    out = tmp_path / "run"
    code = run([
        "train", "--data", data_dir, "--graph", "cosine", "--gamma", 0.5,
        "--k", "1", "--z", 8, "--epochs", 3, "--holdout", "spk00",
        "--seed", 3, "-o", out,
    ])
    assert code == 0
    return out


class TestSynth:
    def test_utterance_count(self, data_dir):
        manifest = (data_dir / "manifest.jsonl").read_text().splitlines()
        assert len(manifest) == 160
        assert (data_dir / "run_manifest.json").exists()

    def test_rerun_is_byte_identical(self, tmp_path, data_dir):
        other = tmp_path / "data2"
        assert run(SYNTH_ARGS + ["-o", other]) == 0
        assert dir_digest(data_dir) == dir_digest(other)

    def test_single_speaker_rejected(self, tmp_path, capsys):
        code = run(["synth", "--speakers", 1, "-o", tmp_path / "x"])
        assert code == 1
        assert "speaker" in capsys.readouterr().err.lower()

    def test_refuses_to_clobber(self, tmp_path, data_dir):
        assert run(SYNTH_ARGS + ["-o", data_dir]) == 2
        assert run(SYNTH_ARGS + ["-o", data_dir, "--force"]) == 0

    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COGCN_SEED", "7")
        a = tmp_path / "a"
        args = [x for x in SYNTH_ARGS if True]
        i = args.index("--seed")
        del args[i : i + 2]  # no --seed flag: fall back to COGCN_SEED
        assert run(args + ["-o", a]) == 0
        b = tmp_path / "b"
        assert run(SYNTH_ARGS + ["-o", b]) == 0  # explicit --seed 7
        assert dir_digest(a) == dir_digest(b)


class TestTrain:
    def test_holdout_outputs(self, trained):
        metrics = json.loads((trained / "metrics.json").read_text())
        assert set(metrics) == {"folds", "mean_wa", "mean_ua", "class_names"}
        assert len(metrics["folds"]) == 1
        assert metrics["folds"][0]["speaker"] == "spk00"
        assert (trained / "fold_spk00.json").exists()
        history = (trained / "fold_spk00_history.csv").read_text().splitlines()
        assert history[0] == "epoch,train_loss,val_wa,val_ua"
        assert len(history) == 4

    def test_unknown_holdout_speaker(self, tmp_path, data_dir, capsys):
        code = run(["train", "--data", data_dir, "--holdout", "nobody",
                    "-o", tmp_path / "r"])
        assert code == 2
        assert "spk00" in capsys.readouterr().err

    def test_ablation_flags_accepted(self, tmp_path, data_dir):
        code = run([
            "train", "--data", data_dir, "--graph", "temporal", "--no-skip",
            "--no-pre", "--k", 1, "--z", 8, "--epochs", 2,
            "--holdout", "spk00", "-o", tmp_path / "r",
        ])
        assert code == 0
        ckpt = json.loads((tmp_path / "r" / "fold_spk00.json").read_text())
        assert ckpt["params"]["W_p"] is None
        assert ckpt["config"]["use_skip"] is False
        assert ckpt["train_meta"]["graph_kind"] == "temporal"

    def test_input_dir_never_mutated(self, tmp_path, data_dir):
        before = dir_digest(data_dir, exclude=())
        run(["train", "--data", data_dir, "--k", 1, "--z", 8, "--epochs", 2,
             "--holdout", "spk00", "-o", tmp_path / "r"])
        assert dir_digest(data_dir, exclude=()) == before

    def test_determinism_across_runs(self, tmp_path, data_dir):
        args = ["train", "--data", data_dir, "--gamma", 0.5, "--k", 1,
                "--z", 8, "--epochs", 3, "--holdout", "spk01", "--seed", 5]
        run(args + ["-o", tmp_path / "r1"])
        run(args + ["-o", tmp_path / "r2"])
        assert dir_digest(tmp_path / "r1") == dir_digest(tmp_path / "r2")


class TestEval:
    def test_checkpoint_reproduces_recorded_val_score(self, data_dir, trained, capsys):
        # the holdout fold validated on spk01; evaluating the saved checkpoint
        # on that speaker must reproduce the best recorded val_wa/val_ua
        history = (trained / "fold_spk00_history.csv").read_text().splitlines()[1:]
        rows = [tuple(float(v) for v in line.split(",")) for line in history]
        best = max(rows, key=lambda r: (r[3], -r[0]))
        code = run(["eval", "--ckpt", trained / "fold_spk00.json",
                    "--data", data_dir, "--speaker", "spk01", "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["wa"] == pytest.approx(best[2], abs=1e-9)
        assert payload["ua"] == pytest.approx(best[3], abs=1e-9)

    def test_json_stdout_is_pure_json(self, data_dir, trained, capsys):
        run(["eval", "--ckpt", trained / "fold_spk00.json", "--data", data_dir,
             "--json"])
        out = capsys.readouterr().out
        json.loads(out)  # a single JSON document, nothing else

    def test_class_names_mismatch_fails_without_output(self, tmp_path, trained):
        # class04 does not exist in the checkpoint's label mapping
        other = tmp_path / "other"
        assert run(["synth", "--classes", 5, "--speakers", 2, "--utts", 5,
                    "--dim", 6, "--frames-lo", 4, "--frames-hi", 8,
                    "-o", other]) == 0
        out = tmp_path / "evalout"
        code = run(["eval", "--ckpt", trained / "fold_spk00.json",
                    "--data", other, "-o", out])
        assert code == 2
        assert not (out / "eval_metrics.json").exists()

    def test_dimension_mismatch(self, tmp_path, trained):
        other = tmp_path / "otherd"
        assert run(["synth", "--classes", 4, "--speakers", 2, "--utts", 2,
                    "--dim", 5, "--frames-lo", 4, "--frames-hi", 8,
                    "-o", other]) == 0
        assert run(["eval", "--ckpt", trained / "fold_spk00.json",
                    "--data", other]) == 2


class TestGraphCommand:
    def test_edge_sets_nest_with_threshold(self, tmp_path, data_dir):
        utt = json.loads(
            (data_dir / "manifest.jsonl").read_text().splitlines()[0]
        )["id"]
        out_tight = tmp_path / "g06"
        out_loose = tmp_path / "g05"
        assert run(["graph", "--data", data_dir, "--utt", utt, "--gamma", 0.6,
                    "-o", out_tight]) == 0
        assert run(["graph", "--data", data_dir, "--utt", utt, "--gamma", 0.5,
                    "-o", out_loose]) == 0
        tight = json.loads((out_tight / f"{utt}.json").read_text())
        loose = json.loads((out_loose / f"{utt}.json").read_text())
        assert {tuple(e) for e in tight["edges"]} <= {tuple(e) for e in loose["edges"]}

    def test_temporal_chain_edge_count(self, tmp_path, data_dir):
        utt = json.loads(
            (data_dir / "manifest.jsonl").read_text().splitlines()[0]
        )["id"]
        out = tmp_path / "gt"
        assert run(["graph", "--data", data_dir, "--utt", utt, "--temporal",
                    "-o", out]) == 0
        obj = json.loads((out / f"{utt}.json").read_text())
        assert len(obj["edges"]) == obj["n"] - 1
        assert (out / f"{utt}.dot").exists()
        assert (out / f"{utt}_features.csv").exists()

    def test_unknown_utterance_lists_ids(self, tmp_path, data_dir, capsys):
        code = run(["graph", "--data", data_dir, "--utt", "nope", "--gamma",
                    0.5, "-o", tmp_path / "g"])
        assert code == 2
        assert "spk00_u000" in capsys.readouterr().err


class TestDiag:
    def test_params_headline_count(self, capsys):
        assert run(["diag", "params", "--d", 88, "--z", 128, "--k", 2, "--c", 4]) == 0
        assert capsys.readouterr().out.strip() == "44676"

    def test_params_no_pre_no_skip(self, capsys):
        assert run(["diag", "params", "--d", 88, "--z", 128, "--k", 3, "--c", 4,
                    "--no-pre", "--no-skip"]) == 0
        assert capsys.readouterr().out.strip() == "44548"

    def test_gradcheck_passes(self, capsys):
        assert run(["diag", "gradcheck", "--seed", 1, "--trials", 6]) == 0
        out = capsys.readouterr().out
        assert "max relative error" in out

    def test_usage_error_exit_code(self):
        assert run(["train"]) == 1  # missing required flags
        assert run(["nonsense"]) == 1
