import json

import numpy as np
import pytest

from tprseg.report import Column, emit_table, provenance, ReportError, ReportTable, write_table


def table(rows=(), prov=None):
    return ReportTable(
        name="sample",
        columns=[Column("label", "str"), Column("count", "int"), Column("mean", "float", "ms"),
                 Column("valid", "bool")],
        rows=list(rows),
        provenance=provenance("sample", {"digits": 6}, ["b", "a"]) if prov is None else prov,
    )


def test_empty_table_is_header_only():
    assert emit_table(table()) == b"label,count,mean,valid\n"


def test_csv_rows_and_missing_values():
    text = emit_table(table([("A", 3, 173.123456789, True), ("AA", None, None, False)])).decode()
    assert text.splitlines() == ["label,count,mean,valid", "A,3,173.123,True", "AA,,,False"]


def test_digits_setting():
    assert emit_table(table([("A", 1, 2 / 3, True)]), digits=3).decode().splitlines()[1] == "A,1,0.667,True"


def test_numpy_values_are_accepted():
    rows = [("A", np.int64(2), np.float64(1.5), np.bool_(True))]
    assert emit_table(table(rows)).decode().splitlines()[1] == "A,2,1.5,True"


def test_emission_is_deterministic():
    rows = [("A", 3, 173.0, True), ("D", 1, 98.5, False)]
    assert emit_table(table(rows)) == emit_table(table(rows))
    assert emit_table(table(rows), "json") == emit_table(table(rows), "json")


def test_json_document():
    document = json.loads(emit_table(table([("A", 3, 2 / 3, True), ("B", 1, float("nan"), False)]), "json"))
    assert document["name"] == "sample"
    assert document["columns"][2] == {"name": "mean", "kind": "float", "unit": "ms"}
    assert document["rows"][0] == {"label": "A", "count": 3, "mean": 0.666667, "valid": True}
    assert document["rows"][1]["mean"] is None
    assert document["provenance"]["inputs"] == 2


@pytest.mark.parametrize("rows, prov, message", [
    ([("A", 1, 2.0)], None, "has 3 values for 4 columns"),
    ([("A", 1.5, 2.0, True)], None, "is not of kind int"),
    ([("A", True, 2.0, True)], None, "is not of kind int"),
    ([(1, 1, 2.0, True)], None, "is not of kind str"),
    ([], {}, "no provenance"),
])
def test_validation_errors(rows, prov, message):
    with pytest.raises(ReportError, match=message):
        emit_table(table(rows, prov))


def test_unknown_format():
    with pytest.raises(ReportError, match="unknown table format"):
        emit_table(table(), "xlsx")


def test_provenance_ignores_input_order():
    assert provenance("x", {}, ["a", "b"]) == provenance("x", {}, ["b", "a"])
    assert provenance("x", {"k": np.int64(1)})["parameters"] == {"k": 1}


def test_write_table(tmp_path):
    paths = write_table(table([("A", 1, 1.0, True)]), tmp_path / "out", formats=("csv", "json"))
    assert [p.name for p in paths] == ["sample.csv", "sample.json"]
    assert paths[0].read_bytes() == emit_table(table([("A", 1, 1.0, True)]))


def test_records_and_column():
    t = table([("A", 1, 1.0, True), ("B", 2, 2.0, False)])
    assert t.column("count") == [1, 2]
    assert t.records()[1] == {"label": "B", "count": 2, "mean": 2.0, "valid": False}
