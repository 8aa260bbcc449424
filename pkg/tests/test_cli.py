import json

import pytest
import yaml

from spinsplit.cli import EXIT_CODES, main

SMALL = {"acquisition": {"n_subsets": 2, "y": 8, "z": 8}}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.yaml"
    cfg.write_text(yaml.safe_dump(SMALL))
    out = root / "sim"
    assert main(["simulate", "--config", str(cfg), "--seed", "5", "--out", str(out)]) == 0
    return root, out


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_simulate_writes_dataset_and_config(small_run):
    _, out = small_run
    assert (out / "dataset" / "manifest.json").exists()
    resolved = yaml.safe_load((out / "config.yaml").read_text())
    assert resolved["seed"] == 5 and resolved["acquisition"]["n_subsets"] == 2


def test_analyze(small_run, capsys, tmp_path):
    _, out = small_run
    assert main(["analyze", "--dataset", str(out / "dataset"), "--out", str(tmp_path)]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["command"] == "analyze" and result["reports"] >= 1
    assert (tmp_path / "config.yaml").exists() and (tmp_path / "reports.jsonl").exists()


@pytest.mark.parametrize("sweep,tables", [("gap_position", ["fig2a.csv", "fig3a.csv"]), ("gap_width", ["fig3b.csv", "fig3c.csv"]), ("patterns", ["fig2b.csv"])])
def test_sweeps(small_run, tmp_path, sweep, tables):
    _, out = small_run
    assert main(["sweep", "--sweep", sweep, "--dataset", str(out / "dataset"), "--out", str(tmp_path)]) == 0
    for t in tables:
        assert (tmp_path / t).exists()
    assert (tmp_path / "config.yaml").exists()


def test_css_calibration_sweep_jsonl(tmp_path):
    assert main(["sweep", "--sweep", "css_calibration", "--shots", "20", "--seed", "3", "--out", str(tmp_path), "--format", "jsonl"]) == 0
    lines = (tmp_path / "figS2.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["table"] == "figS2" and len(lines) > 2
    assert (tmp_path / "config.yaml").exists()


def test_report_writes_all_tables(small_run, tmp_path):
    _, out = small_run
    assert main(["report", "--dataset", str(out / "dataset"), "--out", str(tmp_path)]) == 0
    for t in ("fig2a", "fig2b", "fig3a", "fig3b", "fig3c"):
        assert (tmp_path / f"{t}.csv").exists()


def test_oracle_passes(tmp_path, capsys):
    assert main(["oracle", "--out", str(tmp_path), "--seed", "1"]) == 0
    checks = json.loads((tmp_path / "oracle.json").read_text())
    assert all(c["ok"] for c in checks)
    assert (tmp_path / "config.yaml").exists()


def test_missing_dataset(tmp_path, capsys):
    code = main(["analyze", "--dataset", str(tmp_path / "nope"), "--out", str(tmp_path)])
    assert code == EXIT_CODES["dataset_error"]
    assert error_of(capsys)["error"] == "dataset_error"


def test_missing_config(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CODES["config_error"]
    assert error_of(capsys)["error"] == "config_error"


def test_invalid_config_value(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"acquisition": {"n_subsets": 0}}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CODES["config_error"]


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["simulate", "--seed", "-1"], ["simulate", "--seed", str(2**64)], ["sweep", "--out", "x"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_CODES["usage_error"]
    assert error_of(capsys)["error"] == "usage_error"


def test_sweep_requires_dataset(tmp_path, capsys):
    assert main(["sweep", "--sweep", "gap_width", "--out", str(tmp_path)]) == EXIT_CODES["usage_error"]
