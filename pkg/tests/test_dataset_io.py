"""Tests for CSV input and imputation export."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from nngp_impute.dataset_io import (
    diagnostics_path,
    expand_inputs,
    export_imputed_set,
    imputation_path,
    output_stem,
    read_imputed_csvs,
    read_incomplete_csv,
    write_matrix_csv,
)
from nngp_impute.errors import InputDataError
from nngp_impute.imputers import ImputationConfig, Method, impute
from nngp_impute.pattern_model import sort_rows


class TestReadIncompleteCsv:
    def test_missing_markers(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "data.csv"
            path.write_text("a,b,y\n1.5,,1\nNA,0,2\n3,1,3\n")
            dataset = read_incomplete_csv(path, binary_cols=["b"], response_col="y")
            assert dataset.column_names == ["a", "b", "y"]
            assert dataset.mask.tolist() == [
                [True, False, True], [False, True, True], [True, True, True],
            ]
            assert dataset.binary_cols == [1]
            assert dataset.values[0, 0] == 1.5

    def test_no_header(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "data.csv"
            path.write_text("1,2\n3,NA\n")
            dataset = read_incomplete_csv(path, header=False)
            assert dataset.column_names == ["c1", "c2"]
            assert not dataset.mask[1, 1]

    def test_missing_file(self):
        with pytest.raises(InputDataError, match="not found"):
            read_incomplete_csv("/nonexistent/data.csv")

    def test_non_numeric(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "data.csv"
            path.write_text("a,b\n1,x\n2,3\n")
            with pytest.raises(InputDataError):
                read_incomplete_csv(path)

    def test_too_small(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "data.csv"
            path.write_text("a,b\n1,2\n")
            with pytest.raises(InputDataError):
                read_incomplete_csv(path)


class TestWriteMatrix:
    def test_lossless(self):
        matrix = np.random.default_rng(0).normal(size=(5, 3)) * 1e3
        matrix[0, 0] = 1 / 3
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_matrix_csv(matrix, Path(tmpdir) / "m.csv", ["a", "b", "c"])
            matrices, names = read_imputed_csvs([path])
            assert names == ["a", "b", "c"]
            np.testing.assert_array_equal(matrices[0], matrix)


class TestPaths:
    def test_names(self):
        assert output_stem("dir/my data.csv") == "my_data"
        assert imputation_path("out", "x", 3) == Path("out/x.imp3.csv")
        assert diagnostics_path("out", "x") == Path("out/x.diag.json")


class TestExportImputedSet:
    def test_files_and_diagnostics(self, toy_dataset):
        result = impute(toy_dataset, Method.MI_NNGP1, ImputationConfig(m_imputations=2))
        with tempfile.TemporaryDirectory() as tmpdir:
            paths = export_imputed_set(result, toy_dataset, tmpdir, "toy")
            assert [Path(p).name for p in paths] == ["toy.imp1.csv", "toy.imp2.csv", "toy.diag.json"]
            matrices, _ = read_imputed_csvs(paths[:2])
            np.testing.assert_array_equal(matrices[1], result.imputations[1])
            diag = json.loads(Path(paths[2]).read_text())
            assert diag["provenance"]["method"] == "mi-nngp1"
            assert len(diag["diagnostics"]["patterns"]) == 4

    def test_restores_row_order(self, toy_dataset):
        shuffled = toy_dataset.take_rows(np.random.default_rng(0).permutation(40))
        grouped, order = sort_rows(shuffled)
        result = impute(grouped, Method.COLMEAN, ImputationConfig())
        with tempfile.TemporaryDirectory() as tmpdir:
            paths = export_imputed_set(result, grouped, tmpdir, "toy", order=order)
            matrices, _ = read_imputed_csvs(paths[:1])
            observed = shuffled.mask
            np.testing.assert_array_equal(matrices[0][observed], shuffled.values[observed])


class TestReadImputed:
    def test_shape_mismatch(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            a = write_matrix_csv(np.zeros((3, 2)), Path(tmpdir) / "a.csv", ["x", "y"])
            b = write_matrix_csv(np.zeros((4, 2)), Path(tmpdir) / "b.csv", ["x", "y"])
            with pytest.raises(InputDataError, match="shape"):
                read_imputed_csvs([a, b])

    def test_still_missing(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "a.csv"
            path.write_text("x,y\n1,\n2,3\n")
            with pytest.raises(InputDataError, match="missing"):
                read_imputed_csvs([path])

    def test_expand_inputs(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            for m in (2, 1):
                write_matrix_csv(np.zeros((2, 2)), imputation_path(tmpdir, "d", m))
            found = expand_inputs([f"{tmpdir}/d.imp*.csv", f"{tmpdir}/d.imp1.csv"])
            assert [p.name for p in found] == ["d.imp1.csv", "d.imp2.csv"]
