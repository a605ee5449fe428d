"""Tests for the command-line interface."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from nngp_impute import __version__, kernel_engine
from nngp_impute.cli import app
from nngp_impute.dataset_io import read_imputed_csvs, read_incomplete_csv, write_matrix_csv
from nngp_impute.kernel_engine import KernelCheckReport

runner = CliRunner()


@pytest.fixture
def toy_csv(tmp_path, toy_dataset) -> Path:
    return write_matrix_csv(
        toy_dataset.masked_values(), tmp_path / "toy.csv", toy_dataset.column_names
    )


def _run(*args: str, **kwargs):
    return runner.invoke(app, [str(a) for a in args], **kwargs)


class TestVersion:
    def test_version(self):
        result = _run("--version")
        assert result.exit_code == 0
        assert __version__ in result.output


class TestImpute:
    def test_writes_imputations(self, tmp_path, toy_csv, toy_dataset):
        out = tmp_path / "out"
        result = _run("impute", toy_csv, "-o", out, "--method", "mi-nngp1", "--m", 2, "--seed", 3)
        assert result.exit_code == 0, result.output
        assert sorted(p.name for p in out.iterdir()) == [
            "toy.diag.json", "toy.imp1.csv", "toy.imp2.csv",
        ]
        matrices, names = read_imputed_csvs([out / "toy.imp1.csv", out / "toy.imp2.csv"])
        assert names == toy_dataset.column_names
        for matrix in matrices:
            np.testing.assert_array_equal(matrix[toy_dataset.mask], toy_dataset.values[toy_dataset.mask])
        diag = json.loads((out / "toy.diag.json").read_text())
        assert diag["provenance"]["seed"] == 3
        assert diag["provenance"]["version"] == __version__

    def test_fully_observed_copies(self, tmp_path, toy_truth):
        path = write_matrix_csv(toy_truth, tmp_path / "full.csv", [f"c{j}" for j in range(6)])
        out = tmp_path / "out"
        result = _run("impute", path, "-o", out, "--m", 3)
        assert result.exit_code == 0, result.output
        contents = {(out / f"full.imp{m}.csv").read_bytes() for m in (1, 2, 3)}
        assert len(contents) == 1
        np.testing.assert_array_equal(read_imputed_csvs([out / "full.imp1.csv"])[0][0], toy_truth)

    def test_seeded_bootstrap(self, tmp_path, toy_csv):
        args = ["--method", "mi-nngp2-bs", "--m", 2, "--burn-in", 1, "--seed", 7]
        assert _run("impute", toy_csv, "-o", tmp_path / "a", *args).exit_code == 0
        assert _run("impute", toy_csv, "-o", tmp_path / "b", *args, "--threads", 2).exit_code == 0
        for m in (1, 2):
            name = f"toy.imp{m}.csv"
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_threads_from_environment(self, tmp_path, toy_csv):
        args = ["--method", "mi-nngp2", "--m", 2, "--burn-in", 1]
        assert _run("impute", toy_csv, "-o", tmp_path / "a", *args).exit_code == 0
        result = _run("impute", toy_csv, "-o", tmp_path / "b", *args, env={"NNGP_IMPUTE_THREADS": "3"})
        assert result.exit_code == 0, result.output
        diag = json.loads((tmp_path / "b" / "toy.diag.json").read_text())
        assert diag["provenance"]["method"] == "mi-nngp2"
        assert (tmp_path / "a" / "toy.imp2.csv").read_bytes() == (tmp_path / "b" / "toy.imp2.csv").read_bytes()

    def test_unsorted_rows_rejected(self, tmp_path, toy_dataset):
        shuffled = toy_dataset.take_rows(np.random.default_rng(1).permutation(40))
        path = write_matrix_csv(shuffled.masked_values(), tmp_path / "mixed.csv", shuffled.column_names)
        result = _run("impute", path, "-o", tmp_path / "out")
        assert result.exit_code == 3
        assert "--sort-rows" in result.output

    def test_sort_rows(self, tmp_path, toy_dataset):
        shuffled = toy_dataset.take_rows(np.random.default_rng(1).permutation(40))
        path = write_matrix_csv(shuffled.masked_values(), tmp_path / "mixed.csv", shuffled.column_names)
        out = tmp_path / "out"
        result = _run("impute", path, "-o", out, "--sort-rows", "--m", 2, "--burn-in", 1)
        assert result.exit_code == 0, result.output
        matrix = read_imputed_csvs([out / "mixed.imp1.csv"])[0][0]
        np.testing.assert_array_equal(matrix[shuffled.mask], shuffled.values[shuffled.mask])

    def test_missing_file(self, tmp_path):
        result = _run("impute", tmp_path / "absent.csv", "-o", tmp_path / "out")
        assert result.exit_code == 2

    def test_unknown_method(self, tmp_path, toy_csv):
        result = _run("impute", toy_csv, "-o", tmp_path / "out", "--method", "mice")
        assert result.exit_code == 2

    def test_no_complete_cases(self, tmp_path, no_complete_dataset):
        path = write_matrix_csv(no_complete_dataset.masked_values(), tmp_path / "nc.csv")
        result = _run("impute", path, "-o", tmp_path / "out", "--method", "mi-nngp1")
        assert result.exit_code == 4

    def test_flags_win_over_config(self, tmp_path, toy_csv):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"m": 3, "method": "colmean", "seed": 9}))
        out = tmp_path / "out"
        result = _run("impute", toy_csv, "-o", out, "--config", config, "--method", "mi-nngp1")
        assert result.exit_code == 0, result.output
        assert (out / "toy.imp3.csv").exists()
        diag = json.loads((out / "toy.diag.json").read_text())
        assert diag["provenance"]["method"] == "mi-nngp1"
        assert diag["provenance"]["seed"] == 9

    def test_round_trip_through_reader(self, tmp_path, toy_csv, toy_dataset):
        dataset = read_incomplete_csv(toy_csv)
        np.testing.assert_array_equal(dataset.mask, toy_dataset.mask)


class TestPool:
    @pytest.fixture
    def imputed(self, tmp_path, toy_csv) -> Path:
        out = tmp_path / "imp"
        result = _run("impute", toy_csv, "-o", out, "--m", 3, "--burn-in", 1)
        assert result.exit_code == 0, result.output
        return out

    def test_pool_json(self, tmp_path, imputed):
        target = tmp_path / "pooled.json"
        result = _run(
            "pool", f"{imputed}/toy.imp*.csv", "--response", "x6",
            "--predictor", "x1", "--predictor", "x5", "-o", target,
        )
        assert result.exit_code == 0, result.output
        data = json.loads(target.read_text())
        assert data["pooled"]["m"] == 3
        names = [c["name"] for c in data["pooled"]["coefficients"]]
        assert names == ["intercept", "x1", "x5"]
        assert data["provenance"]["config"]["regression"]["response_col"] == 5

    def test_seed_and_threads(self, tmp_path, imputed):
        serial, threaded = tmp_path / "serial.json", tmp_path / "threaded.json"
        pattern = f"{imputed}/toy.imp*.csv"
        assert _run("pool", pattern, "--response", "x6", "-o", serial).exit_code == 0
        result = _run(
            "pool", pattern, "--response", "x6", "--seed", 12, "--threads", 3, "-o", threaded,
        )
        assert result.exit_code == 0, result.output
        a, b = json.loads(serial.read_text()), json.loads(threaded.read_text())
        assert a["pooled"] == b["pooled"]
        assert b["provenance"]["seed"] == 12

    def test_threads_from_environment(self, imputed):
        result = _run(
            "pool", f"{imputed}/toy.imp*.csv", "--response", "x6",
            env={"NNGP_IMPUTE_THREADS": "2"},
        )
        assert result.exit_code == 0, result.output

    def test_invalid_threads(self, imputed):
        result = _run("pool", f"{imputed}/toy.imp*.csv", "--response", "x6", "--threads", 0)
        assert result.exit_code == 2

    def test_identical_files(self, tmp_path, toy_truth):
        paths = [
            write_matrix_csv(toy_truth, tmp_path / f"same{m}.csv", [f"c{j}" for j in range(6)])
            for m in range(3)
        ]
        target = tmp_path / "pooled.json"
        result = _run("pool", *paths, "--response", "c0", "-o", target)
        assert result.exit_code == 0, result.output
        pooled = json.loads(target.read_text())["pooled"]
        assert pooled["zero_between_variance"] is True
        assert len(pooled["coefficients"]) == 6

    def test_shape_mismatch(self, tmp_path):
        a = write_matrix_csv(np.ones((5, 2)), tmp_path / "a.csv", ["x", "y"])
        b = write_matrix_csv(np.ones((6, 2)), tmp_path / "b.csv", ["x", "y"])
        assert _run("pool", a, b, "--response", "y").exit_code == 2

    def test_unknown_column(self, imputed):
        result = _run("pool", f"{imputed}/toy.imp*.csv", "--response", "nope")
        assert result.exit_code == 2

    def test_no_files(self, tmp_path):
        assert _run("pool", f"{tmp_path}/*.csv", "--response", "y").exit_code == 2


class TestBenchmark:
    def test_unknown_scenario(self):
        assert _run("benchmark", "p42-gaussian").exit_code == 2

    def test_json_scenario(self, tmp_path):
        scenario = tmp_path / "tiny.json"
        scenario.write_text(json.dumps({
            "n": 60, "p": 10, "q": [2, 5, 8], "mechanism": "mcar", "mcar_rate": 0.3,
        }))
        target = tmp_path / "table.csv"
        result = _run(
            "benchmark", scenario, "--mc", 1, "--method", "colmean",
            "--method", "complete-data", "-o", target,
        )
        assert result.exit_code == 0, result.output
        lines = target.read_text().splitlines()
        assert lines[0] == "Method,Time(s),Imp MSE,Bias,CR,SE,SD"
        assert len(lines) == 3


class TestKernelCheck:
    def test_passes(self):
        result = _run("kernel-check")
        assert result.exit_code == 0, result.output
        assert "PASS" in result.output

    def test_threads_option(self):
        args = ["kernel-check", "--cases", 4, "--samples", 20000, "--seed", 2]
        serial = _run(*args)
        threaded = _run(*args, "--threads", 2)
        assert serial.exit_code == threaded.exit_code
        assert serial.exit_code in (0, 5)
        def report_lines(output: str) -> list[str]:
            return [line for line in output.splitlines() if "Oracle" in line or "case " in line]

        assert report_lines(serial.output) == report_lines(threaded.output)
        assert report_lines(serial.output)

    def test_failure_exits_with_numerical_code(self, monkeypatch):
        failing = KernelCheckReport(cases=2, agreeing=0, failures=[
            {"case": c, "depth": 1, "analytic": 1.0, "estimate": 2.0, "std_error": 0.01}
            for c in range(2)
        ])
        monkeypatch.setattr(kernel_engine, "kernel_check", lambda **kwargs: failing)
        result = _run("kernel-check")
        assert result.exit_code == 5
        assert "FAIL" in result.output
        assert "2 of 2 cases" in result.output
