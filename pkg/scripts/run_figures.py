"""Simulate the squeezed and coherent datasets and write every figure table.

Usage: python scripts/run_figures.py [--out runs/figures] [--seed 20180427] [--css-shots 50000]
"""

import argparse
import json
import logging
import time
from pathlib import Path

from spinsplit import dataset, report
from spinsplit.analysis import css_calibration, stream_line_profiles, sweep_gap_position, sweep_gap_width, sweep_patterns
from spinsplit.config import RunConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/figures")
    ap.add_argument("--seed", type=int, default=RunConfig().seed)
    ap.add_argument("--css-shots", type=int, default=50_000)
    ap.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}

    t0 = time.perf_counter()
    squeezed_cfg = RunConfig.from_dict({"seed": args.seed})
    sq = dataset.run_acquisition(squeezed_cfg)
    squeezed_cfg.dump(out / "squeezed.config.yaml")
    positions = sweep_gap_position(sq)
    vertical = sweep_gap_position(sq, "vertical")
    widths = sweep_gap_width(sq)
    patterns, skipped = sweep_patterns(sq)
    raw = sweep_gap_position(sq, noise=False)
    timings["squeezed"] = time.perf_counter() - t0
    for name, recs in (("fig2a", positions), ("fig3a", positions), ("fig3b", widths), ("fig3c", widths), ("fig2b", patterns)):
        report.write_table(name, recs, out, args.format)
    report.write_table("fig2a", vertical, out / "vertical", args.format)
    report.write_table("fig3a", vertical, out / "vertical", args.format)
    report.write_table("fig2a", raw, out / "no_noise_subtraction", args.format)
    report.write_table("fig3a", raw, out / "no_noise_subtraction", args.format)
    report.write_audit(positions + widths + patterns, out / "squeezed.reports.jsonl")
    if skipped:
        (out / "diagnostics.json").write_text(json.dumps([{"pattern": p, "reason": r} for p, r in skipped], indent=1))

    t0 = time.perf_counter()
    css_cfg = RunConfig.from_dict({"seed": args.seed, "state": {"kind": "css"}})
    css = dataset.run_acquisition(css_cfg)
    css_cfg.dump(out / "css.config.yaml")
    report.write_table("figS4", sweep_gap_position(css), out, args.format)
    timings["css_control"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    prof = stream_line_profiles(css_cfg, args.css_shots)
    report.write_table("figS2", css_calibration(css_cfg, prof), out, args.format)
    timings["css_calibration"] = time.perf_counter() - t0

    (out / "timings.json").write_text(json.dumps(timings, indent=1))
    print(json.dumps({"out": str(out), "seconds": timings}))


if __name__ == "__main__":
    main()
