import json

import numpy as np
import pytest

from bodybgk.errors import MatrixParseError
from bodybgk.models import CheckResult, OutputFormat
from bodybgk.store import ResultStore, build_manifest, dumps_json, format_cell, read_matrix


def test_format_cell():
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(np.float64(2.0)) == "2"
    assert format_cell(True) == "true"
    assert format_cell(np.bool_(False)) == "false"
    assert format_cell(None) == ""
    assert format_cell(OutputFormat.JSON) == "json"
    assert format_cell(7) == "7"


def test_dumps_json_is_stable():
    text = dumps_json({"b": np.arange(2.0), "a": np.float64(1.5)})
    assert text.endswith("\n")
    assert list(json.loads(text)) == ["a", "b"]
    assert json.loads(text)["b"] == [0.0, 1.0]


@pytest.mark.parametrize("content", [
    "1 0 0\n0 1 0\n0 0 1\n",
    "1,0,0\n0,1,0\n0,0,1",
    "# 单位阵\n1 0 0   # 第一行\n\n0, 1, 0\n0 0 1\n",
])
def test_read_matrix_formats(tmp_path, content):
    path = tmp_path / "J.txt"
    path.write_text(content, encoding="utf-8")
    np.testing.assert_array_equal(read_matrix(path), np.eye(3))


@pytest.mark.parametrize("content,row,column", [
    ("1 0 0\n0 x 0\n0 0 1\n", 2, 2),
    ("1 0 0\n0 1\n0 0 1\n", 2, 3),
    ("1 0 0 5\n0 1 0\n0 0 1\n", 1, 4),
    ("1 0 0\n0 1 0\n0 0 inf\n", 3, 3),
    ("1 0 0\n0 1 0\n0 0 1\n1 1 1\n", 4, 1),
])
def test_read_matrix_reports_location(tmp_path, content, row, column):
    path = tmp_path / "J.txt"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(MatrixParseError) as excinfo:
        read_matrix(path)
    assert (excinfo.value.row, excinfo.value.column) == (row, column)


def test_read_matrix_missing_rows_and_file(tmp_path):
    path = tmp_path / "J.txt"
    path.write_text("1 0 0\n", encoding="utf-8")
    with pytest.raises(MatrixParseError):
        read_matrix(path)
    with pytest.raises(MatrixParseError):
        read_matrix(tmp_path / "missing.txt")


def test_result_store_tables(tmp_path):
    rows = [CheckResult(suite="s", name="a", passed=True), CheckResult(suite="s", name="b", passed=False, detail="x")]
    csv_store = ResultStore(tmp_path / "csv")
    path = csv_store.write_models("verify", rows, CheckResult)
    assert path.read_text(encoding="utf-8") == "suite,name,passed,detail\ns,a,true,\ns,b,false,x\n"

    json_store = ResultStore(tmp_path / "json", OutputFormat.JSON)
    path = json_store.write_table("t", ["x", "y"], [(1.0, 2.0)])
    assert json.loads(path.read_text(encoding="utf-8")) == [{"x": 1.0, "y": 2.0}]


def test_manifest_roundtrip(tmp_path):
    store = ResultStore(tmp_path)
    assert store.read_manifest() is None
    manifest = build_manifest("coeffs", ["coeffs", "--rho", "8"], 42, {"nodes_1d": 128})
    store.write_manifest(manifest)
    loaded = store.read_manifest()
    assert loaded == manifest
    assert {"python", "numpy", "scipy", "pydantic", "bodybgk"} <= set(loaded.versions)
