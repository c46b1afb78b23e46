import json
import subprocess
import sys

import pytest

from noisylabels.cli import main


def write_config(path, **overrides):
    raw = {
        "method": "vanilla",
        "dataset": {"synthetic": {"classes": 3, "instances": 240,
                                  "vocab_per_class": 20, "overlap": 0.0,
                                  "seed": 7}},
        "split": {"train": 0.7, "validation": 0.15, "test": 0.15, "seed": 7},
        "noise": {"kind": "uniform_random", "level": 0.2},
        "featurizer": {"hash_dim": 1024},
        "train": {"steps": 80, "learning_rate": 0.5, "patience": 4,
                  "eval_every": 20, "hidden_size": 16},
        "runs": 1,
        "base_seed": 3,
    }
    raw.update(overrides)
    path.write_text(json.dumps(raw), encoding="utf-8")
    return path


class TestExitCodes:
    def test_success_is_zero(self, tmp_path):
        out = tmp_path / "corpus.jsonl"
        assert main(["gen", "--classes", "3", "--instances", "60",
                     "--vocab-per-class", "8", "--out", str(out)]) == 0
        assert out.exists()

    def test_validation_error_is_one(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", method="not-a-method")
        assert main(["train", "--config", str(cfg)]) == 1

    def test_method_failure_is_two(self, tmp_path):
        # threshold 0 removes every instance: a method failure, not bad input
        cfg = write_config(tmp_path / "cfg.json", method="nc",
                           cleaning={"folds": 3, "threshold": 0.0})
        assert main(["clean", "--config", str(cfg),
                     "--out-dir", str(tmp_path / "out")]) == 2

    def test_missing_config_file_is_one(self, tmp_path):
        missing = tmp_path / "nope.json"
        cfg = write_config(tmp_path / "cfg.json")
        assert main(["noise", "--in", str(missing), "--kind", "uniform_random",
                     "--out", str(tmp_path / "x.jsonl")]) == 1


class TestPipelines:
    def test_gen_noise_train_from_files(self, tmp_path):
        corpus = tmp_path / "corpus.jsonl"
        noised = tmp_path / "noised.jsonl"
        assert main(["gen", "--classes", "3", "--instances", "240",
                     "--vocab-per-class", "20", "--seed", "7",
                     "--out", str(corpus)]) == 0
        assert main(["noise", "--in", str(corpus), "--kind", "uniform_random",
                     "--level", "0.2", "--seed", "1", "--out", str(noised),
                     "--matrix-out", str(tmp_path / "matrix.csv")]) == 0
        assert (tmp_path / "matrix.csv").read_text().startswith("gold\\observed")
        # a corpus whose test portion would be noisy is rejected outright
        bad = write_config(tmp_path / "bad.json",
                           dataset={"path": str(noised)},
                           noise={"kind": "none"})
        assert main(["train", "--config", str(bad)]) == 1
        # the supported flow noises train/validation inside the experiment
        cfg = write_config(tmp_path / "cfg.json",
                           dataset={"path": str(corpus)})
        report_path = tmp_path / "report.json"
        assert main(["train", "--config", str(cfg),
                     "--out", str(report_path)]) == 0
        payload = json.loads(report_path.read_text())
        assert payload["method"] == "vanilla"
        assert 0.0 <= payload["accuracy_mean"] <= 1.0

    def test_preset_gen_writes_three_splits(self, tmp_path):
        out_dir = tmp_path / "sep"
        assert main(["gen", "--preset", "separable",
                     "--out-dir", str(out_dir)]) == 0
        for name in ("train", "validation", "test"):
            assert (out_dir / f"{name}.jsonl").exists()

    def test_clean_outputs(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", method="nc",
                           cleaning={"folds": 3,
                                     "tuning_quantiles": [0.6, 0.9]})
        out_dir = tmp_path / "cleaning"
        assert main(["clean", "--config", str(cfg),
                     "--out-dir", str(out_dir)]) == 0
        for name in ("cleaned.jsonl", "cleaning_report.json",
                     "threshold_sweep.csv", "noise_matrices.csv"):
            assert (out_dir / name).exists()

    def test_ensemble_subcommand(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", method="boosting",
                           ensemble={"members": 2, "subset_fraction": 0.8})
        out = tmp_path / "report.json"
        assert main(["ensemble", "--config", str(cfg), "--out", str(out)]) == 0
        assert json.loads(out.read_text())["method"] == "boosting"
        bad = write_config(tmp_path / "bad.json", method="vanilla")
        assert main(["ensemble", "--config", str(bad)]) == 1

    def test_compare_subcommand(self, tmp_path):
        shared = {
            "dataset": {"synthetic": {"classes": 3, "instances": 240,
                                      "vocab_per_class": 20, "overlap": 0.0,
                                      "seed": 7}},
            "split": {"train": 0.7, "validation": 0.15, "test": 0.15,
                      "seed": 7},
            "featurizer": {"hash_dim": 1024},
            "train": {"steps": 80, "learning_rate": 0.5, "patience": 4,
                      "eval_every": 20, "hidden_size": 16},
            "runs": 1,
            "experiments": [
                {"method": "vanilla",
                 "noise": {"kind": "uniform_random", "level": 0.1}},
                {"method": "vanilla",
                 "noise": {"kind": "uniform_random", "level": 0.3}},
            ],
        }
        cfg = tmp_path / "compare.json"
        cfg.write_text(json.dumps(shared), encoding="utf-8")
        out = tmp_path / "table.csv"
        assert main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
        header = out.read_text().splitlines()[0]
        assert header == "method,uniform_random 10%,uniform_random 30%"

    def test_plotdata_from_report(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json")
        report_path = tmp_path / "report.json"
        assert main(["train", "--config", str(cfg),
                     "--out", str(report_path)]) == 0
        out_dir = tmp_path / "plots"
        assert main(["plotdata", "--report", str(report_path),
                     "--out-dir", str(out_dir)]) == 0
        lines = (out_dir / "accuracy_runs.csv").read_text().splitlines()
        assert lines[0] == "run,seed,accuracy"
        assert len(lines) == 2


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "noisylabels.cli", "gen", "--classes", "2",
             "--instances", "20", "--vocab-per-class", "6",
             "--out", str(tmp_path / "c.jsonl")],
            capture_output=True, text=True)
        assert result.returncode == 0
        assert "wrote 20 instances" in result.stdout
