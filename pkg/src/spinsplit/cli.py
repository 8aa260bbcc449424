"""Command-line entry point: ``spinsplit {simulate,analyze,sweep,oracle,report}``.

Every command writes ``config.yaml`` (the resolved run configuration) into
its output directory. Failures print one JSON object
``{"error": <category>, "message": ...}`` on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, dataset, report
from .config import ConfigError, RunConfig
from .criteria import NonPositiveDenominator
from .regions import UndefinedRegionError, make_split_masks

log = logging.getLogger("spinsplit")

EXIT_CODES = {
    "usage_error": 2,
    "config_error": 3,
    "dataset_error": 4,
    "undefined_region": 5,
    "numerical_error": 6,
    "io_error": 7,
    "oracle_mismatch": 8,
    "report_error": 9,
    "internal_error": 70,
}

SWEEPS = ("gap_position", "gap_width", "patterns", "css_calibration")


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage_error", message)


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = str(args.out)
    return cfg.validate()


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(args):
    if not args.dataset:
        raise CliError("usage_error", "--dataset is required for this command")
    ds = dataset.load(args.dataset)
    if getattr(args, "config", None):
        # analysis-side settings (sweep section) may be overridden; physics stays with the data
        override = RunConfig.load(args.config)
        ds.config.sweep = override.sweep
    return ds


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, default=report._jsonable))


def cmd_simulate(args) -> dict:
    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    t0 = time.perf_counter()
    ds = dataset.run_acquisition(cfg)
    path = dataset.save(ds, out / "dataset")
    cfg.dump(out / "config.yaml")
    return {"dataset": str(path), "shots": len(ds), "mu": ds.mu, "seconds": time.perf_counter() - t0}


def _default_reports(ds):
    geom = ds.geometry
    orient = ds.config.sweep.orientation
    half = geom.width // 2 if orient == "horizontal" else geom.height // 2
    a, b = make_split_masks(geom, orient, half, 1)
    reps = [analysis.analyze_masks(ds, a, b)]
    c = analysis.gap_center_for_ratio(ds, ds.config.sweep.target_ratio, orient)
    if c != half:
        a, b = make_split_masks(geom, orient, c, 1)
        reps.append(analysis.analyze_masks(ds, a, b))
    return reps


def cmd_analyze(args) -> dict:
    ds = _load_dataset(args)
    out = _out_dir(args, ds.config)
    reps = _default_reports(ds)
    report.write_audit(reps, out / "reports.jsonl")
    ds.config.dump(out / "config.yaml")
    summary = [report.report_row(r) for r in reps]
    _write_json(out / "summary.json", summary)
    return {"reports": len(reps), "summary": summary}


def _run_sweep(name: str, args, fmt: str):
    if name == "css_calibration":
        cfg = _resolve_config(args)
        out = _out_dir(args, cfg)
        shots = args.shots or 10_000
        prof = analysis.stream_line_profiles(cfg, shots)
        rows = analysis.css_calibration(cfg, prof, cfg.sweep.orientation)
        cfg.dump(out / "config.yaml")
        return cfg, out, {"figS2": rows}, []
    ds = _load_dataset(args)
    out = _out_dir(args, ds.config)
    orient = ds.config.sweep.orientation
    diagnostics = []
    if name == "gap_position":
        reps = analysis.sweep_gap_position(ds, orient)
        key = "figS4" if ds.config.state.kind == "css" else "fig3a"
        tables = {"fig2a": reps, key: reps}
    elif name == "gap_width":
        reps = analysis.sweep_gap_width(ds, orientation=orient)
        tables = {"fig3b": reps, "fig3c": reps}
    elif name == "patterns":
        reps, diagnostics = analysis.sweep_patterns(ds)
        tables = {"fig2b": reps}
    else:
        raise CliError("usage_error", f"unknown sweep {name!r}; choose from {SWEEPS}")
    report.write_audit(reps, out / f"{name}.reports.jsonl")
    ds.config.dump(out / "config.yaml")
    return ds.config, out, tables, diagnostics


def cmd_sweep(args) -> dict:
    if not args.sweep:
        raise CliError("usage_error", f"--sweep is required; choose from {SWEEPS}")
    _, out, tables, diagnostics = _run_sweep(args.sweep, args, args.format)
    paths = [str(report.write_table(t, recs, out, args.format)) for t, recs in tables.items()]
    if diagnostics:
        _write_json(out / "diagnostics.json", [{"pattern": p, "reason": r} for p, r in diagnostics])
    return {"tables": paths, "skipped": len(diagnostics)}


def cmd_report(args) -> dict:
    ds = _load_dataset(args)
    out = _out_dir(args, ds.config)
    names = ["gap_position"] if ds.config.state.kind == "css" else ["gap_position", "gap_width", "patterns"]
    paths = []
    for name in names:
        _, _, tables, diagnostics = _run_sweep(name, args, args.format)
        for t, recs in tables.items():
            if t == "fig2a" and ds.config.state.kind == "css":
                continue
            paths.append(str(report.write_table(t, recs, out, args.format)))
        if diagnostics:
            _write_json(out / "diagnostics.json", [{"pattern": p, "reason": r} for p, r in diagnostics])
    return {"tables": paths}


def cmd_oracle(args) -> dict:
    from .oracles import enumerate_partitioned_moments, kitagawa_ueda
    from .imaging import combined_width_px, invert_saturation
    from .spin import DickeState, partitioned_moments_exact, spin_moments, squeezed_state, tune_twist, wineland_xi2

    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    rng = np.random.default_rng(cfg.seed)
    checks = []

    def check(name, value, reference, tol):
        err = abs(value - reference)
        checks.append({"check": name, "value": value, "reference": reference, "abs_error": err, "tolerance": tol, "ok": bool(err <= tol)})

    for n in (2, 4, 6, 8):
        c = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
        state = DickeState(n, c / np.linalg.norm(c))
        fa, fb = rng.random(n), rng.random(n)
        fast, brute = partitioned_moments_exact(state, fa, fb), enumerate_partitioned_moments(state, fa, fb)
        for field in ("mean_a", "var_a", "var_b", "cov_ab"):
            check(f"partition_n{n}_{field}", getattr(fast, field), getattr(brute, field), 1e-9)
    n = cfg.state.n_atoms
    mu = tune_twist(n, cfg.state.target_db)
    ku = kitagawa_ueda(n, mu)
    check("oat_xi2_vs_closed_form", wineland_xi2(spin_moments(squeezed_state(n, mu)), n), ku.xi2, 1e-9)
    check("blur_total_width_px", combined_width_px(invert_saturation()), 1.4, 0.05)
    _write_json(out / "oracle.json", checks)
    cfg.dump(out / "config.yaml")
    failed = [c["check"] for c in checks if not c["ok"]]
    if failed:
        raise CliError("oracle_mismatch", f"failed checks: {failed}")
    return {"checks": len(checks), "failed": 0}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spinsplit", description="Simulate and analyze split spin-squeezed clouds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, dataset_arg=False):
        p.add_argument("--config", help="YAML/JSON run configuration")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed; overrides the config")
        p.add_argument("--out", help="output directory")
        if dataset_arg:
            p.add_argument("--dataset", help="dataset directory written by 'simulate'")
        return p

    common(sub.add_parser("simulate", help="run the acquisition and save a dataset"))
    common(sub.add_parser("analyze", help="criteria at the half split and the target ratio"), True)
    p = common(sub.add_parser("sweep", help="run one mask sweep and write its tables"), True)
    p.add_argument("--sweep", choices=SWEEPS)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--shots", type=int, help="shots for the css_calibration stream")
    common(sub.add_parser("oracle", help="cross-check fast paths against reference computations"))
    p = common(sub.add_parser("report", help="write every figure table for a dataset"), True)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "report": cmd_report,
}


def _fail(category: str, message: str) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return EXIT_CODES[category]


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise CliError("usage_error", "a subcommand is required")
        if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
            raise CliError("usage_error", "--seed must be an unsigned 64-bit integer")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        result = COMMANDS[args.command](args)
    except CliError as exc:
        return _fail(exc.category, str(exc))
    except ConfigError as exc:
        return _fail("config_error", str(exc))
    except dataset.DatasetCorruptError as exc:
        return _fail("dataset_error", str(exc))
    except UndefinedRegionError as exc:
        return _fail("undefined_region", str(exc))
    except (NonPositiveDenominator, ZeroDivisionError, FloatingPointError) as exc:
        return _fail("numerical_error", str(exc))
    except report.ReportError as exc:
        return _fail("report_error", str(exc))
    except OSError as exc:
        return _fail("io_error", str(exc))
    except Exception as exc:  # noqa: BLE001 - last resort, still machine-readable
        log.debug("unhandled error", exc_info=True)
        return _fail("internal_error", f"{type(exc).__name__}: {exc}")
    print(json.dumps({"command": args.command, **result}, default=report._jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
