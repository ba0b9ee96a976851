"""Command-line entry point: subcommands and exit codes."""

import csv

import pytest
import yaml

import main as cli
from src.engine import CheckResult, GradcheckReport

TINY_NET = ["--set", "width=8", "--set", "n_blocks=1", "--set", "expansion=2", "--set", "threads=0"]


def run(*argv) -> int:
    return cli.main(list(argv))


class TestExitCodes:

    def test_budget(self, capsys):
        assert run("budget") == 0
        assert "parity" in capsys.readouterr().out

    def test_budget_echoes_config(self, tmp_path):
        assert run("budget", "--set", "scale=3", "--out", str(tmp_path)) == 0
        assert yaml.safe_load((tmp_path / "config.yaml").read_text())['scale'] == 3

    def test_unknown_set_key(self):
        assert run("budget", "--set", "widht=8") == 2

    def test_bad_config_value(self):
        assert run("budget", "--set", "family=wdsr-c") == 2

    def test_train_without_manifest(self, tmp_path):
        assert run("train", "--out", str(tmp_path)) == 2

    def test_eval_missing_checkpoint(self, tmp_path, prepared):
        assert run("eval", str(tmp_path / "absent.ckpt"), str(prepared[1].path)) == 3

    def test_prepare_empty_dir(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert run("prepare", str(tmp_path / "empty"), str(tmp_path / "out")) == 3

    def test_gradcheck_failure(self, monkeypatch):
        failing = GradcheckReport(results=[CheckResult("relu", 0.5, 1, False)])
        monkeypatch.setattr("src.engine.run_gradcheck", lambda *args, **kwargs: failing)
        assert run("gradcheck") == 4

    def test_unexpected_error(self, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr("src.models.budget_report", boom)
        assert run("budget") == 1

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            run()


class TestEndToEnd:

    def test_prepare_train_eval(self, hr_dir, tmp_path, capsys):
        data = tmp_path / "data"
        assert run("prepare", str(hr_dir), str(data), "--scale", "2", "--val-count", "2", *TINY_NET) == 0
        assert (data / "train.tsv").exists() and (data / "val.tsv").exists()
        assert "rgb_mean" in capsys.readouterr().out

        run_dir = tmp_path / "run"
        assert run(
            "train", "--out", str(run_dir), "--seed", "4", *TINY_NET,
            "--set", f"train_manifest={data / 'train.tsv'}",
            "--set", f"val_manifest={data / 'val.tsv'}",
            "--set", "max_steps=2", "--set", "batch_size=2", "--set", "patch_size=16",
            "--set", "val_every=2", "--set", "log_every=1", "--set", "checkpoint_every=0",
        ) == 0
        echo = yaml.safe_load((run_dir / "config.yaml").read_text())
        assert echo['seed'] == 4
        assert echo['lr0'] == 1e-3
        assert echo['out_dir'] == str(run_dir)
        assert (run_dir / "metrics.csv").exists()
        checkpoint = run_dir / "checkpoints" / "latest.ckpt"
        assert checkpoint.exists()

        eval_dir = tmp_path / "eval"
        sr_dir = tmp_path / "sr"
        assert run("eval", str(checkpoint), str(data / "val.tsv"), "--out", str(eval_dir),
                   "--save-images", str(sr_dir)) == 0
        assert "MEAN" in capsys.readouterr().out
        with open(eval_dir / "eval.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 2
        assert set(rows[0]) == {"image", "psnr_model", "psnr_bicubic"}
        saved = sorted(p.name for p in sr_dir.iterdir())
        assert saved == sorted(f"{r['image']}_x2.png" for r in rows)

    def test_train_scale_mismatch(self, prepared, tmp_path):
        assert run(
            "train", "--out", str(tmp_path / "run"), *TINY_NET,
            "--set", f"train_manifest={prepared[0].path}", "--set", "scale=3",
        ) == 2

    def test_bench(self, tmp_path):
        assert run("bench", "--width", "8", "--blocks", "1", "--repeats", "1",
                   "--set", "budget_input_h=8", "--set", "budget_input_w=8") == 0
