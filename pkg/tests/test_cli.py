"""Command-line contracts: subcommands, outputs, exit codes, determinism."""

import csv
import json
import os
import sys

import numpy as np
import pytest

from flowtm.cli import main


def run_cli(args, capsys=None):
    """Invoke the CLI entry point in-process; returns the exit code."""
    argv = sys.argv
    sys.argv = ["flowtm"] + args
    try:
        main()
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    finally:
        sys.argv = argv


FAST = ["--clauses", "60", "--epochs", "8", "--bins", "6",
        "--specificity", "5.0", "--threshold", "15", "--seed", "3"]


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    from flowtm.dataset import gen_synthetic

    path = tmp_path_factory.mktemp("data") / "flows.csv"
    gen_synthetic([60, 24, 24, 24, 24], seed=21, separation=7.0).to_csv(path)
    return str(path)


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, data_csv):
    out = tmp_path_factory.mktemp("model")
    code = run_cli(["train", "--data", data_csv, "--out", str(out)] + FAST)
    assert code == 0
    return out


class TestGen:
    def test_writes_requested_rows(self, tmp_path):
        path = tmp_path / "gen.csv"
        assert run_cli(["gen", "--out", str(path), "--rows-per-class", "20",
                        "--classes", "5", "--seed", "1"]) == 0
        with open(path) as handle:
            rows = list(csv.reader(handle))
        assert len(rows) == 1 + 100

    def test_counts_override(self, tmp_path):
        path = tmp_path / "gen.csv"
        assert run_cli(["gen", "--out", str(path), "--counts", "10,5,5"]) == 0
        with open(path) as handle:
            rows = list(csv.DictReader(handle))
        labels = [int(r["Label"]) for r in rows]
        assert len(rows) == 20
        assert sorted(set(labels)) == [0, 1, 2]

    def test_bad_counts_is_config_error(self, tmp_path):
        assert run_cli(["gen", "--out", str(tmp_path / "x.csv"),
                        "--counts", "ten,5"]) == 2


class TestTrain:
    def test_outputs_exist(self, trained_dir):
        assert (trained_dir / "model.ftm").exists()
        assert (trained_dir / "metrics.json").exists()
        assert (trained_dir / "metrics.csv").exists()
        assert (trained_dir / "train_report.json").exists()

    def test_metrics_json_has_five_classes(self, trained_dir):
        payload = json.loads((trained_dir / "metrics.json").read_text())
        assert len(payload["per_class"]) == 5
        assert payload["weighted"]["f1"] > 0.9

    def test_train_report_has_epoch_trace(self, trained_dir):
        payload = json.loads((trained_dir / "train_report.json").read_text())
        assert len(payload["train_accuracy"]) == 8
        assert payload["balance"]["post_counts"]
        assert payload["clean"]["rows_before"] > 0

    def test_missing_data_file_is_usage_error(self, tmp_path):
        assert run_cli(["train", "--data", str(tmp_path / "nope.csv"),
                        "--out", str(tmp_path)]) == 2

    def test_seeded_rerun_is_byte_identical(self, data_csv, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert run_cli(["train", "--data", data_csv, "--out", str(out_a)] + FAST) == 0
        assert run_cli(["train", "--data", data_csv, "--out", str(out_b)] + FAST) == 0
        assert (out_a / "model.ftm").read_bytes() == (out_b / "model.ftm").read_bytes()


class TestPredict:
    def test_labels_match_training_data(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "preds.csv"
        assert run_cli(["predict", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--out", str(out)]) == 0
        with open(out) as handle:
            rows = list(csv.DictReader(handle))
        with open(data_csv) as handle:
            truth = [r["Label"] for r in csv.DictReader(handle)]
        assert len(rows) == len(truth)
        agree = sum(1 for r, t in zip(rows, truth) if r["predicted"] == t)
        assert agree / len(rows) > 0.95

    def test_empty_input_gives_empty_output(self, trained_dir, data_csv, tmp_path):
        src = tmp_path / "empty.csv"
        with open(data_csv) as handle:
            header = handle.readline()
        src.write_text(header)
        out = tmp_path / "preds.csv"
        assert run_cli(["predict", "--model", str(trained_dir / "model.ftm"),
                        "--data", str(src), "--out", str(out)]) == 0
        with open(out) as handle:
            rows = list(csv.DictReader(handle))
        assert rows == []

    def test_bad_rows_are_quarantined(self, trained_dir, data_csv, tmp_path, capsys):
        with open(data_csv) as handle:
            lines = handle.read().splitlines()
        broken = lines[:4]
        parts = broken[2].split(",")
        parts[0] = "notanumber"
        broken[2] = ",".join(parts)
        src = tmp_path / "broken.csv"
        src.write_text("\n".join(broken) + "\n")
        out = tmp_path / "preds.csv"
        assert run_cli(["predict", "--model", str(trained_dir / "model.ftm"),
                        "--data", str(src), "--out", str(out)]) == 0
        with open(out) as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 2  # 3 data rows, 1 quarantined

    def test_schema_mismatch_is_exit_4(self, trained_dir, tmp_path):
        src = tmp_path / "wrong.csv"
        src.write_text("a,b,Label\n1,2,0\n")
        assert run_cli(["predict", "--model", str(trained_dir / "model.ftm"),
                        "--data", str(src), "--out", str(tmp_path / "p.csv")]) == 4

    def test_missing_model_without_server_is_exit_2(self, data_csv, tmp_path):
        assert run_cli(["predict", "--data", data_csv,
                        "--out", str(tmp_path / "p.csv")]) == 2


class TestExplain:
    def test_three_files_per_sample(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "expl"
        assert run_cli(["explain", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--index", "0", "--index", "2",
                        "--out", str(out)]) == 0
        for idx in (0, 2):
            for kind in ("votes", "activations", "contributions"):
                assert (out / f"sample_{idx}_{kind}.csv").exists()

    def test_votes_match_predict(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "expl"
        preds = tmp_path / "preds.csv"
        assert run_cli(["explain", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--index", "0", "--out", str(out)]) == 0
        assert run_cli(["predict", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--out", str(preds)]) == 0
        with open(out / "sample_0_votes.csv") as handle:
            votes = {r["class"]: int(r["vote"]) for r in csv.DictReader(handle)}
        with open(preds) as handle:
            first = next(csv.DictReader(handle))
        for name, vote in votes.items():
            assert int(first[f"vote_{name}"]) == vote

    def test_activation_matrix_dimensions(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "expl"
        assert run_cli(["explain", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--index", "1", "--out", str(out)]) == 0
        with open(out / "sample_1_activations.csv") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 5 * 60

    def test_index_out_of_range_is_data_error(self, trained_dir, data_csv, tmp_path):
        assert run_cli(["explain", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--index", "999999",
                        "--out", str(tmp_path / "x")]) == 3


class TestBench:
    def test_report_fields(self, trained_dir, data_csv, tmp_path, capsys):
        out = tmp_path / "bench.json"
        assert run_cli(["bench", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--iters", "20", "--warmup", "5",
                        "--out", str(out)]) == 0
        payload = json.loads(out.read_text())
        assert payload["samples_measured"] == 20
        assert payload["inference_time_us_mean"] > 0
        assert payload["model_size_kb"] > 0

    def test_csv_output(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "bench.csv"
        assert run_cli(["bench", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--iters", "5", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("inference_time_us_mean")
        assert len(lines) == 2

    def test_binarization_path_is_slower(self, trained_dir, data_csv, tmp_path):
        fast = tmp_path / "fast.json"
        full = tmp_path / "full.json"
        assert run_cli(["bench", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--iters", "60", "--out", str(fast)]) == 0
        assert run_cli(["bench", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--iters", "60",
                        "--include-binarization", "--out", str(full)]) == 0
        fast_us = json.loads(fast.read_text())["inference_time_us_mean"]
        full_us = json.loads(full.read_text())["inference_time_us_mean"]
        assert full_us >= fast_us

    def test_single_iter_zero_std(self, trained_dir, data_csv, tmp_path):
        out = tmp_path / "bench.json"
        assert run_cli(["bench", "--model", str(trained_dir / "model.ftm"),
                        "--data", data_csv, "--iters", "1", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["inference_time_us_std"] == 0.0


class TestCv:
    def test_cv_json(self, data_csv, tmp_path):
        out = tmp_path / "cv.json"
        assert run_cli(["cv", "--data", data_csv, "--folds", "2", "--out", str(out)]
                       + FAST) == 0
        payload = json.loads(out.read_text())
        assert payload["k"] == 2
        assert len(payload["folds"]) == 2
        assert 0.0 <= payload["mean"]["weighted_f1"] <= 1.0


class TestErrorJson:
    def test_machine_readable_error_on_stderr(self, trained_dir, tmp_path, capsys):
        src = tmp_path / "wrong.csv"
        src.write_text("a,b,Label\n1,2,0\n")
        code = run_cli(["predict", "--model", str(trained_dir / "model.ftm"),
                        "--data", str(src), "--out", str(tmp_path / "p.csv")])
        captured = capsys.readouterr()
        assert code == 4
        payload = json.loads(captured.err.strip().splitlines()[-1])
        assert payload["error"] == "SchemaError"
        assert "missing" in payload["message"]
