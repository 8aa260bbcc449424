import csv
import json
import math

import pytest

from spinsplit.analysis import sweep_gap_position
from spinsplit.report import COLUMNS, TABLES, ReportError, build_table, report_row, write_audit, write_table


@pytest.fixture(scope="module")
def reports(small_squeezed):
    return sweep_gap_position(small_squeezed)[::6]


def test_every_table_column_is_described():
    for _, columns in TABLES.values():
        assert set(columns) <= set(COLUMNS)


def test_empty_records_rejected():
    with pytest.raises(ReportError):
        build_table("fig2a", [])


def test_unknown_table_rejected(reports):
    with pytest.raises(ReportError):
        build_table("fig9z", reports)


def test_unknown_format_rejected(reports, tmp_path):
    with pytest.raises(ReportError):
        write_table("fig2a", reports, tmp_path, fmt="xlsx")


def test_csv_round_trip(reports, tmp_path):
    path = write_table("fig3a", reports, tmp_path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(reports)
    assert list(rows[0]) == TABLES["fig3a"][1]
    for row, rep in zip(rows, reports):
        assert float(row["e_epr_ab"]) == rep.e_epr_ab[0]
        assert float(row["e_epr_ab_sem"]) == rep.e_epr_ab[1]
    header = json.loads((tmp_path / "fig3a.columns.json").read_text())
    assert header["columns"]["e_epr_ab"] == COLUMNS["e_epr_ab"]


def test_pattern_cell_with_commas_survives_csv(reports, tmp_path):
    path = write_table("fig2b", reports, tmp_path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert json.loads(rows[0]["pattern"])["orientation"] == "horizontal"


def test_jsonl_header_first(reports, tmp_path):
    path = write_table("fig2a", reports, tmp_path, fmt="jsonl")
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert lines[0]["table"] == "fig2a" and len(lines) == len(reports) + 1


def test_nonfinite_values_are_flagged():
    row = {"gap_center": 3, "region": "A", "splitting_ratio": 0.5, "raw": float("nan"), "normalized": float("inf")}
    _, _, rows = build_table("figS2", [row])
    assert "nonfinite:raw" in rows[0]["flags"] and "nonfinite:normalized" in rows[0]["flags"]
    assert math.isnan(rows[0]["raw"])


def test_report_row_flattens_pairs(reports):
    row = report_row(reports[0])
    assert row["e_ent"] == reports[0].e_ent[0] and row["e_ent_sem"] == reports[0].e_ent[1]
    assert row["noise_subtracted"] == 1


def test_audit_holds_subset_records(reports, tmp_path):
    path = write_audit(reports, tmp_path / "audit.jsonl")
    first = json.loads(path.read_text().splitlines()[0])
    assert len(first["subsets"]) == 3
    with pytest.raises(ReportError):
        write_audit([], tmp_path / "empty.jsonl")
