"""End-to-end tests of the command-line pipeline on a small planted dataset."""

import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from labelsearch.cli import main


SYNTH = [
    "synth", "--n", "240", "--k", "3", "--latent-dim", "5", "--d1", "10",
    "--d2", "10", "--separation", "6.0", "--noise-sigma", "0.4", "--seed", "21",
]

FAST = [
    "--gamma", "0.4", "--alpha", "0.02", "--iters", "40", "--inner-steps", "20",
    "--inner-lr", "0.05", "--subset-size", "160", "--train-frac", "0.8",
    "--n-subsets", "2", "--anneal-at", "20", "--cv-folds", "4",
]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(SYNTH + ["--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def sweep_dir(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    code = main([
        "sweep", "--phi1", str(dataset / "phi1.json"),
        "--phi2", str(dataset / "phi2.json"), "--k", "3",
        *FAST, "--seeds", "4", "--jobs", "2", "--out", str(out),
    ])
    assert code == 0
    return out


class TestSynth:
    def test_writes_complete_artifact_set(self, dataset):
        names = {p.name for p in dataset.iterdir()}
        assert {"phi1.json", "phi1.f32", "phi2.json", "phi2.f32",
                "labels.txt", "dataset.json"} <= names

    def test_manifests_load(self, dataset):
        from labelsearch import load_labels, load_space

        phi1 = load_space(dataset / "phi1.json")
        phi2 = load_space(dataset / "phi2.json")
        labels = load_labels(dataset / "labels.txt")
        assert phi1.n_samples == phi2.n_samples == 240
        assert len(labels) == 240
        assert phi1.manifest.labels_path == "labels.txt"

    def test_dataset_json_echoes_config(self, dataset):
        meta = json.loads((dataset / "dataset.json").read_text())
        assert meta["config"]["n_samples"] == 240
        assert meta["config"]["seed"] == 21
        assert "config_hash" in meta

    def test_spurious_flag_adds_sidecar(self, tmp_path):
        code = main(SYNTH[:1] + ["--n", "200", "--k", "3", "--latent-dim", "5",
                                 "--d1", "10", "--d2", "10", "--separation",
                                 "6.0", "--noise-sigma", "0.3", "--seed", "4",
                                 "--spurious", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "spurious_labels.txt").exists()


class TestTrain:
    def test_single_run_round_trips(self, dataset, tmp_path):
        out = tmp_path / "run.json"
        code = main([
            "train", "--phi1", str(dataset / "phi1.json"),
            "--phi2", str(dataset / "phi2.json"), "--k", "3",
            *FAST, "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["seed"] == 3
        assert payload["config"]["n_classes"] == 3
        assert len(payload["labels"]) == 240
        assert len(payload["objective_trace"]) == 40
        assert "config_hash" in payload
        from labelsearch import load_run

        run = load_run(out)
        assert run.encoder.n_classes == 3

    def test_repeat_run_is_byte_identical(self, dataset, tmp_path):
        args = [
            "train", "--phi1", str(dataset / "phi1.json"),
            "--phi2", str(dataset / "phi2.json"), "--k", "3",
            *FAST, "--seed", "5",
        ]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestSweep:
    def test_one_file_per_seed(self, sweep_dir):
        files = sorted(p.name for p in sweep_dir.glob("run-*.json"))
        assert files == ["run-0000.json", "run-0001.json",
                         "run-0002.json", "run-0003.json"]

    def test_jobs_do_not_change_bytes(self, dataset, sweep_dir, tmp_path):
        serial = tmp_path / "serial"
        code = main([
            "sweep", "--phi1", str(dataset / "phi1.json"),
            "--phi2", str(dataset / "phi2.json"), "--k", "3",
            *FAST, "--seeds", "4", "--jobs", "1", "--out", str(serial),
        ])
        assert code == 0
        for name in ("run-0000.json", "run-0003.json"):
            assert (serial / name).read_bytes() == (sweep_dir / name).read_bytes()


class TestAggregateEvaluate:
    def test_aggregate_then_evaluate(self, dataset, sweep_dir, tmp_path):
        agg = tmp_path / "agg.json"
        assert main(["aggregate", "--runs", str(sweep_dir), "--out", str(agg)]) == 0
        payload = json.loads(agg.read_text())
        assert len(payload["consensus"]) == 240
        assert "reference_seed" in payload
        assert "runs_config_hash" in payload

        report = tmp_path / "eval.json"
        code = main([
            "evaluate", "--pred", str(agg),
            "--labels", str(dataset / "labels.txt"), "--out", str(report),
        ])
        assert code == 0
        metrics = json.loads(report.read_text())
        assert metrics["acc"] > 0.9
        assert metrics["ari"] > 0.7
        assert len(metrics["per_class_counts"]) == 3

    def test_evaluate_accepts_run_files(self, dataset, sweep_dir, tmp_path):
        report = tmp_path / "eval-run.json"
        code = main([
            "evaluate", "--pred", str(sweep_dir / "run-0000.json"),
            "--labels", str(dataset / "labels.txt"), "--out", str(report),
        ])
        assert code == 0
        assert 0.0 <= json.loads(report.read_text())["acc"] <= 1.0

    def test_correlate_emits_full_precision_csv(self, dataset, sweep_dir, tmp_path):
        out = tmp_path / "corr.csv"
        code = main([
            "correlate", "--runs", str(sweep_dir),
            "--labels", str(dataset / "labels.txt"), "--out", str(out),
        ])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        assert set(rows[0]) == {"seed", "cv_accuracy", "acc"}
        for row in rows:
            # every cell must be a bare number, not some wrapped repr
            assert 0.0 <= float(row["cv_accuracy"]) <= 1.0
            assert 0.0 <= float(row["acc"]) <= 1.0
            assert int(row["seed"]) >= 0

    def test_reliable_selection(self, dataset, sweep_dir, tmp_path):
        out = tmp_path / "reliable.json"
        code = main([
            "reliable", "--runs", str(sweep_dir),
            "--phi1", str(dataset / "phi1.json"),
            "--nk", "5", "--n-neigh", "20", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["classes"]) == 3
        for entry in payload["classes"]:
            assert len(entry["indices"]) == 5


class TestKMeans:
    def test_baseline_with_truth(self, dataset, tmp_path):
        out = tmp_path / "km.json"
        code = main([
            "kmeans", "--phi1", str(dataset / "phi1.json"), "--k", "3",
            "--n-runs", "2", "--seed", "0",
            "--labels", str(dataset / "labels.txt"), "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["n_runs"] == 2
        assert 0.0 <= payload["mean_acc"] <= 1.0


class TestErrorSurface:
    def test_usage_error_is_exit_1(self, capsys):
        assert main(["train", "--bogus-flag"]) == 1
        assert main(["no-such-command"]) == 1
        assert main([]) == 1

    def test_missing_data_is_exit_2(self, tmp_path):
        code = main([
            "train", "--phi1", str(tmp_path / "absent.json"),
            "--phi2", str(tmp_path / "absent2.json"), "--k", "3",
            "--out", str(tmp_path / "run.json"),
        ])
        assert code == 2

    def test_unattainable_synth_is_exit_2(self, tmp_path):
        code = main([
            "synth", "--n", "60", "--k", "3", "--latent-dim", "5",
            "--d1", "10", "--d2", "10", "--separation", "0.05",
            "--noise-sigma", "4.0", "--seed", "1", "--out", str(tmp_path),
        ])
        assert code == 2

    def test_train_requires_class_count(self, dataset, tmp_path):
        code = main([
            "train", "--phi1", str(dataset / "phi1.json"),
            "--phi2", str(dataset / "phi2.json"),
            "--out", str(tmp_path / "run.json"),
        ])
        assert code == 1  # missing required argument is a usage error


class TestConfigResolution:
    def test_file_then_flags_precedence(self, dataset, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({
            "n_classes": 3, "gamma": 0.4, "alpha": 0.02, "iters": 30,
            "inner_steps": 20, "inner_lr": 0.05, "subset_size": 160,
            "train_frac": 0.8, "n_subsets": 2, "anneal_at": [20],
            "cv_folds": 4,
        }))
        out = tmp_path / "run.json"
        code = main([
            "train", "--phi1", str(dataset / "phi1.json"),
            "--phi2", str(dataset / "phi2.json"),
            "--config", str(cfg_file), "--iters", "12", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["config"]["iters"] == 12      # flag wins
        assert payload["config"]["gamma"] == 0.4     # file fills the rest

    def test_preset_fills_defaults(self, tmp_path, dataset):
        out = tmp_path / "run.json"
        code = main([
            "train", "--phi1", str(dataset / "phi1.json"),
            "--phi2", str(dataset / "phi2.json"), "--k", "3",
            "--preset", "imagenet",
            # shrink the expensive bits so the test stays fast
            "--iters", "3", "--subset-size", "100", "--inner-steps", "5",
            "--n-subsets", "1", "--cv-folds", "2", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["config"]["alpha"] == 0.1
        assert payload["config"]["inner_lr"] == 0.1
        assert payload["config"]["anneal_at"] == []

    def test_anneal_at_empty_string_disables(self, dataset, tmp_path):
        out = tmp_path / "run.json"
        code = main([
            "train", "--phi1", str(dataset / "phi1.json"),
            "--phi2", str(dataset / "phi2.json"), "--k", "3",
            *FAST[:-4], "--anneal-at", "", "--cv-folds", "2",
            "--out", str(out),
        ])
        assert code == 0
        assert json.loads(out.read_text())["config"]["anneal_at"] == []


class TestLogging:
    def test_env_var_controls_verbosity(self, dataset, tmp_path):
        env = dict(os.environ, LABELSEARCH_LOG="DEBUG",
                   PYTHONPATH=str((tmp_path / ".." ).resolve()))
        proc = subprocess.run(
            [sys.executable, "-m", "labelsearch",
             "train", "--phi1", str(dataset / "phi1.json"),
             "--phi2", str(dataset / "phi2.json"), "--k", "3",
             *FAST, "--iters", "3", "--seed", "0",
             "--out", str(tmp_path / "run.json")],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0
        assert "loaded space" in proc.stderr.lower()
