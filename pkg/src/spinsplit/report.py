"""Figure-style tables from criteria reports, as CSV or JSON-lines files.

Each table is written as ``<name>.csv`` (RFC 4180 quoting, header row of
column names) plus ``<name>.columns.json`` describing every column, or as
``<name>.jsonl`` whose first record is the same column description. A
numeric cell that is not finite is kept as is and named in the row's
``flags`` cell.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .criteria import CriteriaReport


class ReportError(ValueError):
    pass


COLUMNS = {
    "orientation": "gap orientation (horizontal: A left of gap; vertical: A above)",
    "gap_center": "gap position, pixel index before centering",
    "gap_width": "gap width in pixels",
    "pattern": "pattern descriptor as JSON",
    "splitting_ratio": "N^A / (N^A + N^B) from mean detected atom numbers",
    "atoms_a": "mean detected atoms in region A",
    "atoms_b": "mean detected atoms in region B",
    "eta_a": "effective coupling of region A (smaller of the two states)",
    "eta_b": "effective coupling of region B (smaller of the two states)",
    "e_ent": "entanglement criterion, mean over subsets (< 1: entangled)",
    "e_ent_sem": "standard error of e_ent",
    "floor_ent": "entanglement criterion a coherent state reaches through crosstalk",
    "e_epr_ab": "EPR criterion, A steers B, mean over subsets (< 1: steering)",
    "e_epr_ab_sem": "standard error of e_epr_ab",
    "e_epr_ba": "EPR criterion, B steers A",
    "e_epr_ba_sem": "standard error of e_epr_ba",
    "floor_epr_ab": "crosstalk floor of e_epr_ab",
    "floor_epr_ba": "crosstalk floor of e_epr_ba",
    "product_a": "non-inferred uncertainty product of region A",
    "product_a_sem": "standard error of product_a",
    "product_b": "non-inferred uncertainty product of region B",
    "product_b_sem": "standard error of product_b",
    "wineland_db": "whole-cloud Wineland parameter, 10 log10(xi^2)",
    "noise_subtracted": "1 if detection noise was subtracted",
    "region": "region label of a calibration row",
    "eta_eff": "effective coupling used for normalization",
    "eta_state1": "effective coupling from the state-1 density",
    "eta_state2": "effective coupling from the state-2 density",
    "eta_mixture": "effective coupling of the equal-weight state mixture",
    "atoms": "mean detected atoms in the region",
    "raw": "Var(N1 - N2) / <N1 + N2>, detection noise subtracted",
    "raw_se": "standard error of raw",
    "normalized": "raw / eta_eff, equals 1 for a coherent state",
    "normalized_se": "standard error of normalized",
    "flags": "semicolon-separated warnings for this row",
}

TABLES = {
    "fig2a": ("entanglement versus splitting ratio", [
        "orientation", "gap_center", "gap_width", "splitting_ratio", "atoms_a", "atoms_b", "eta_a", "eta_b",
        "e_ent", "e_ent_sem", "floor_ent", "wineland_db", "noise_subtracted", "flags"]),
    "fig2b": ("entanglement for region shapes", [
        "pattern", "splitting_ratio", "atoms_a", "atoms_b", "e_ent", "e_ent_sem", "floor_ent", "noise_subtracted", "flags"]),
    "fig3a": ("EPR steering versus splitting ratio", [
        "orientation", "gap_center", "gap_width", "splitting_ratio", "e_epr_ab", "e_epr_ab_sem", "floor_epr_ab",
        "e_epr_ba", "e_epr_ba_sem", "floor_epr_ba", "product_a", "product_a_sem", "product_b", "product_b_sem",
        "noise_subtracted", "flags"]),
    "fig3b": ("EPR steering versus gap width", [
        "gap_center", "gap_width", "splitting_ratio", "e_epr_ab", "e_epr_ab_sem", "floor_epr_ab",
        "e_epr_ba", "e_epr_ba_sem", "floor_epr_ba", "noise_subtracted", "flags"]),
    "fig3c": ("region atom numbers versus gap width", ["gap_center", "gap_width", "atoms_a", "atoms_b", "flags"]),
    "figS2": ("coherent-state local fluctuations versus splitting ratio", [
        "gap_center", "region", "splitting_ratio", "atoms", "eta_eff", "eta_state1", "eta_state2", "eta_mixture",
        "raw", "raw_se", "normalized", "normalized_se", "flags"]),
    "figS4": ("coherent-state control: all criteria versus splitting ratio", [
        "orientation", "gap_center", "splitting_ratio", "e_ent", "e_ent_sem", "floor_ent", "e_epr_ab", "e_epr_ab_sem",
        "e_epr_ba", "e_epr_ba_sem", "product_a", "product_b", "noise_subtracted", "flags"]),
}


def report_row(rep: CriteriaReport) -> dict:
    """Flatten one report into table cells."""
    cfg = rep.config
    row = {
        "orientation": cfg.get("orientation", ""),
        "gap_center": cfg.get("gap_center", ""),
        "gap_width": cfg.get("gap_width", cfg.get("gap", "")),
        "pattern": json.dumps({k: v for k, v in cfg.items() if k != "noise_subtracted"}, sort_keys=True),
        "splitting_ratio": rep.splitting_ratio,
        "atoms_a": rep.atoms_a,
        "atoms_b": rep.atoms_b,
        "eta_a": rep.eta_a,
        "eta_b": rep.eta_b,
        "floor_ent": rep.floor_ent,
        "floor_epr_ab": rep.floor_epr_ab,
        "floor_epr_ba": rep.floor_epr_ba,
        "wineland_db": rep.wineland_db,
        "noise_subtracted": int(bool(cfg.get("noise_subtracted", True))),
        "flags": ";".join(rep.flags),
    }
    for key in ("e_ent", "e_epr_ab", "e_epr_ba", "product_a", "product_b"):
        row[key], row[f"{key}_sem"] = getattr(rep, key)
    return row


def _flag_nonfinite(row: dict, columns) -> dict:
    bad = [c for c in columns if isinstance(row.get(c), float) and not math.isfinite(row[c])]
    if bad:
        flags = [f for f in str(row.get("flags", "")).split(";") if f]
        row = {**row, "flags": ";".join(flags + [f"nonfinite:{c}" for c in bad])}
    return row


def build_table(name: str, records) -> tuple[str, list, list[dict]]:
    """(description, columns, rows) of a named table; records are reports or calibration dicts."""
    if name not in TABLES:
        raise ReportError(f"unknown table {name!r}; known: {sorted(TABLES)}")
    records = list(records)
    if not records:
        raise ReportError(f"no records for table {name}")
    description, columns = TABLES[name]
    rows = []
    for rec in records:
        row = report_row(rec) if isinstance(rec, CriteriaReport) else dict(rec)
        row.setdefault("flags", "")
        row = _flag_nonfinite(row, columns)
        rows.append({c: row.get(c, "") for c in columns})
    return description, columns, rows


def write_table(name: str, records, out_dir, fmt: str = "csv") -> Path:
    """Write one table and return its path."""
    description, columns, rows = build_table(name, records)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = {"table": name, "description": description, "columns": {c: COLUMNS[c] for c in columns}}
    if fmt == "csv":
        path = out_dir / f"{name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, quoting=csv.QUOTE_MINIMAL)
            writer.writeheader()
            writer.writerows(rows)
        (out_dir / f"{name}.columns.json").write_text(json.dumps(header, indent=1))
    elif fmt in ("jsonl", "structured-text"):
        path = out_dir / f"{name}.jsonl"
        with path.open("w") as fh:
            fh.write(json.dumps(header) + "\n")
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    else:
        raise ReportError(f"unknown format {fmt!r}; use 'csv' or 'jsonl'")
    return path


def write_audit(reports, path) -> Path:
    """Every report with all per-subset intermediates, one JSON record per line."""
    reports = list(reports)
    if not reports:
        raise ReportError("no reports to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.to_dict(), default=_jsonable) + "\n")
    return path


def _jsonable(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")
