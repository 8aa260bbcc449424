"""Dataset-level analysis: mask sweeps producing :class:`CriteriaReport` records."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .criteria import (
    CriteriaReport,
    SubsetBlock,
    aggregate_subsets,
    crosstalk_floors,
    evaluate_subset,
    wineland_parameter,
)
from .dataset import ShotDataset
from .regions import (
    PATTERN_LIBRARY,
    RegionMask,
    UndefinedRegionError,
    build_profile,
    centering_offsets,
    count_atoms_batch,
    ensemble_centroids,
    eta_mixture,
    local_spin,
    make_pattern_masks,
    make_split_masks,
    overlap_integrals,
)

log = logging.getLogger(__name__)


@dataclass
class _Prepared:
    flat1: np.ndarray
    flat2: np.ndarray
    offsets: dict


def _prepare(ds: ShotDataset) -> _Prepared:
    cached = getattr(ds, "_prepared", None)
    if cached is None:
        n = len(ds)
        cached = _Prepared(
            flat1=ds.frames1.reshape(n, -1).astype(np.float64),
            flat2=ds.frames2.reshape(n, -1).astype(np.float64),
            offsets=centering_offsets(ensemble_centroids(ds.frames1, ds.frames2), ds.geometry),
        )
        ds._prepared = cached
    return cached


def region_counts(ds: ShotDataset, mask: RegionMask) -> tuple[np.ndarray, np.ndarray]:
    """Per-shot (N1, N2) inside an already-centered mask."""
    prep = _prepare(ds)
    return prep.flat1 @ mask.pixels[1].ravel().astype(float), prep.flat2 @ mask.pixels[2].ravel().astype(float)


def center_masks(ds: ShotDataset, *masks: RegionMask) -> list[RegionMask]:
    offsets = _prepare(ds).offsets
    return [m.shifted(offsets) for m in masks]


def build_blocks(ds: ShotDataset, spin_a: np.ndarray, spin_b: np.ndarray, noise_a: float, noise_b: float):
    blocks = []
    for subset in np.unique(ds.subsets):
        in_subset = ds.subsets == subset
        a, b = {}, {}
        for ax in ("plus_x", "minus_x", "y", "z"):
            sel = in_subset & (ds.axes == ax)
            a[ax], b[ax] = spin_a[sel], spin_b[sel]
        blocks.append(SubsetBlock(a, b, noise_a, noise_b, int(subset)))
    return blocks


def _wineland_db(ds: ShotDataset, noise_model) -> float:
    whole = RegionMask.whole_frame(ds.geometry)
    n1, n2 = region_counts(ds, whole)
    spins = local_spin(n1, n2, 1.0)
    noise = (noise_model.frame_sigma(1) ** 2 + noise_model.frame_sigma(2) ** 2) / 4
    xi2 = []
    for blk in build_blocks(ds, spins, spins, noise, noise):
        if len(blk.a["z"]) < 2 or len(blk.a["plus_x"]) == 0 or len(blk.a["minus_x"]) == 0:
            continue
        sel = ds.subsets == blk.subset_id
        n_tot = float(np.mean(n1[sel] + n2[sel]))
        xi2.append(wineland_parameter(blk, n_tot, noise)[0])
    if not xi2:
        return float("nan")
    mean = float(np.mean(xi2))
    return 10 * np.log10(mean) if mean > 0 else float("-inf")


def analyze_masks(ds: ShotDataset, mask_a: RegionMask, mask_b: RegionMask, noise: bool = True, supersample: int = 4) -> CriteriaReport:
    """Evaluate every criterion for one (A, B) mask pair, centered on the dataset."""
    im = ds.config.imaging
    density, psf, noise_model = im.density(), im.psf(), im.noise_model()
    mask_a, mask_b = center_masks(ds, mask_a, mask_b)
    if mask_a.is_empty or mask_b.is_empty:
        raise UndefinedRegionError("empty region")
    prof_a = build_profile(density, psf, mask_a, noise_model, supersample)
    prof_b = build_profile(density, psf, mask_b, noise_model, supersample)
    n1a, n2a = region_counts(ds, mask_a)
    n1b, n2b = region_counts(ds, mask_b)
    spin_a = local_spin(n1a, n2a, prof_a.eta_eff)
    spin_b = local_spin(n1b, n2b, prof_b.eta_eff)
    blocks = build_blocks(ds, spin_a, spin_b, prof_a.noise_var, prof_b.noise_var)
    records = [evaluate_subset(blk, noise) for blk in blocks]
    floors = crosstalk_floors(density, psf, mask_a, mask_b, supersample)

    def agg(key):
        return aggregate_subsets([r[key] for r in records])

    atoms_a, atoms_b = float(np.mean(n1a + n2a)), float(np.mean(n1b + n2b))
    flags = []
    if ds.truncated:
        flags.append("truncated_frames")
    if any(r["gain_fallback"] for r in records):
        flags.append("gain_fallback")
    if any(r["negative_variance"] for r in records):
        flags.append("negative_variance")
    return CriteriaReport(
        config={**mask_a.descriptor, "noise_subtracted": noise},
        splitting_ratio=atoms_a / (atoms_a + atoms_b),
        atoms_a=atoms_a,
        atoms_b=atoms_b,
        eta_a=prof_a.eta_eff,
        eta_b=prof_b.eta_eff,
        e_ent=agg("e_ent"),
        e_epr_ab=agg("e_epr_ab"),
        e_epr_ba=agg("e_epr_ba"),
        product_a=agg("product_a"),
        product_b=agg("product_b"),
        floor_epr_ab=floors["epr_ab"],
        floor_epr_ba=floors["epr_ba"],
        floor_ent=floors["ent"],
        wineland_db=_wineland_db(ds, noise_model),
        subsets=records,
        flags=flags,
    )


def predicted_ratio(ds_or_config, mask_a: RegionMask, mask_b: RegionMask) -> float:
    """Splitting ratio expected from the density model (state-averaged)."""
    config = getattr(ds_or_config, "config", ds_or_config)
    im = config.imaging
    ratios = []
    for st in (1, 2):
        ints = overlap_integrals(im.density(), im.psf(), {"a": mask_a, "b": mask_b}, st, 2)
        ratios.append(ints["a"] / (ints["a"] + ints["b"]))
    return float(np.mean(ratios))


def auto_gap_positions(config, orientation: str, width: int = 1, lo: float = 0.08, hi: float = 0.92) -> list[int]:
    geom = config.imaging.geometry
    extent = geom.width if orientation == "horizontal" else geom.height
    out = []
    for c in range(1, extent - 1):
        try:
            a, b = make_split_masks(geom, orientation, c, width)
        except ValueError:
            continue
        if lo <= predicted_ratio(config, a, b) <= hi:
            out.append(c)
    return out


def sweep_gap_position(ds: ShotDataset, orientation: str = "horizontal", width: int = 1, positions=None, noise: bool = True) -> list[CriteriaReport]:
    if positions is None:
        positions = ds.config.sweep.gap_positions or auto_gap_positions(ds.config, orientation, width)
    reports = []
    for c in positions:
        a, b = make_split_masks(ds.geometry, orientation, int(c), width)
        reports.append(analyze_masks(ds, a, b, noise))
    return reports


def gap_center_for_ratio(ds: ShotDataset, target: float, orientation: str = "horizontal") -> int:
    """Gap position (width 1) whose predicted splitting ratio is closest to ``target``."""
    positions = auto_gap_positions(ds.config, orientation, 1, 0.0, 1.0)
    ratios = []
    for c in positions:
        a, b = make_split_masks(ds.geometry, orientation, c, 1)
        ratios.append(predicted_ratio(ds, a, b))
    return int(positions[int(np.argmin(np.abs(np.array(ratios) - target)))])


def sweep_gap_width(ds: ShotDataset, widths=None, target_ratio: float | None = None, orientation: str = "horizontal", noise: bool = True) -> list[CriteriaReport]:
    widths = widths or ds.config.sweep.gap_widths
    target = ds.config.sweep.target_ratio if target_ratio is None else target_ratio
    center = gap_center_for_ratio(ds, target, orientation)
    reports = []
    for w in widths:
        try:
            a, b = make_split_masks(ds.geometry, orientation, center, int(w))
        except ValueError as exc:
            log.warning("skipping gap width %s: %s", w, exc)
            continue
        reports.append(analyze_masks(ds, a, b, noise))
    return reports


def sweep_patterns(ds: ShotDataset, patterns=None, noise: bool = True):
    """Reports per pattern plus (pattern, reason) diagnostics for the ones skipped."""
    patterns = patterns or ds.config.sweep.patterns or list(PATTERN_LIBRARY)
    reports, diagnostics = [], []
    for pat in patterns:
        try:
            a, b = make_pattern_masks(ds.geometry, pat)
            reports.append(analyze_masks(ds, a, b, noise))
        except (ValueError, KeyError) as exc:
            diagnostics.append((pat, str(exc)))
            log.warning("skipping pattern %s: %s", pat, exc)
    return reports, diagnostics


def local_fluctuations(n1: np.ndarray, n2: np.ndarray, eta: float, noise_var_counts: float = 0.0) -> dict:
    """Coherent-state calibration numbers for one region.

    ``raw`` is Var(N1 - N2) / <N1 + N2> after detection-noise subtraction,
    which should equal eta_eff; ``normalized`` is 4 Var(S) eta / <N>, which
    should equal 1. Standard errors assume Gaussian fluctuations.
    """
    d = np.asarray(n1) - np.asarray(n2)
    total = float(np.mean(np.asarray(n1) + np.asarray(n2)))
    measured = float(np.var(d, ddof=1))
    raw = (measured - noise_var_counts) / total
    # sampling error comes from the full measured variance, noise included
    raw_se = measured * np.sqrt(2.0 / (len(d) - 1)) / total
    return {
        "atoms": total,
        "raw": raw,
        "raw_se": raw_se,
        "normalized": raw / eta,
        "normalized_se": raw_se / eta,
    }


@dataclass
class LineProfiles:
    """Per-shot column and row sums of both frames, for split-mask analyses without frames."""

    cols1: np.ndarray  # (shots, width)
    cols2: np.ndarray
    rows1: np.ndarray  # (shots, height)
    rows2: np.ndarray
    mean1: np.ndarray  # ensemble-mean frames
    mean2: np.ndarray

    def __len__(self) -> int:
        return len(self.cols1)

    @classmethod
    def concat(cls, *parts: "LineProfiles") -> "LineProfiles":
        """Pool independent streams; mean frames are shot-weighted."""
        n = np.array([len(p) for p in parts], dtype=float)
        w = n / n.sum()
        return cls(
            *(np.concatenate([getattr(p, k) for p in parts]) for k in ("cols1", "cols2", "rows1", "rows2")),
            sum(wi * p.mean1 for wi, p in zip(w, parts)),
            sum(wi * p.mean2 for wi, p in zip(w, parts)),
        )


def stream_line_profiles(config, shots: int, axis: str = "z") -> LineProfiles:
    """Simulate ``shots`` readouts along ``axis`` as one subset, keeping only line sums.

    Memory stays O(shots * (width + height)).
    """
    from .acquisition import iter_shots

    if shots < 1:
        raise ValueError("shots must be >= 1")
    config = replace(config, acquisition=replace(config.acquisition, n_subsets=1))
    axes = {axis: int(shots)}
    cols1, cols2, rows1, rows2 = [], [], [], []
    geom = config.imaging.geometry
    sum1 = np.zeros((geom.height, geom.width))
    sum2 = np.zeros_like(sum1)
    for shot in iter_shots(config, axes, keep_truth=False):
        f1, f2 = shot.frame1.astype(np.float64), shot.frame2.astype(np.float64)
        cols1.append(f1.sum(axis=0))
        cols2.append(f2.sum(axis=0))
        rows1.append(f1.sum(axis=1))
        rows2.append(f2.sum(axis=1))
        sum1 += f1
        sum2 += f2
    n = max(len(cols1), 1)
    return LineProfiles(
        np.array(cols1), np.array(cols2), np.array(rows1), np.array(rows2), sum1 / n, sum2 / n
    )


def split_counts(profiles: LineProfiles, mask: RegionMask, orientation: str):
    """(N1, N2) per shot for a mask made of whole columns (horizontal) or rows (vertical)."""
    axis = 0 if orientation == "horizontal" else 1
    out = []
    for st, lines in ((1, profiles.cols1 if axis == 0 else profiles.rows1), (2, profiles.cols2 if axis == 0 else profiles.rows2)):
        grid = mask.pixels[st]
        line_mask = grid.all(axis=axis)
        if not np.array_equal(grid, np.broadcast_to(line_mask[None, :] if axis == 0 else line_mask[:, None], grid.shape)):
            raise ValueError("mask is not made of whole lines")
        out.append(lines @ line_mask.astype(float))
    return out[0], out[1]


def css_calibration(config, profiles: LineProfiles, orientation: str = "horizontal", positions=None, supersample: int = 4) -> list[dict]:
    """Local fluctuation ratios per gap position for coherent-state shots (Fig. S2 analogue)."""
    im = config.imaging
    geom = im.geometry
    density, psf, noise_model = im.density(), im.psf(), im.noise_model()
    offsets = centering_offsets(ensemble_centroids(profiles.mean1[None], profiles.mean2[None]), geom)
    positions = positions or auto_gap_positions(config, orientation, 1, 0.02, 0.98)
    rows = []
    for c in positions:
        masks = make_split_masks(geom, orientation, int(c), 1)
        masks = [m.shifted(offsets) for m in masks]
        n1a, n2a = split_counts(profiles, masks[0], orientation)
        n1b, n2b = split_counts(profiles, masks[1], orientation)
        atoms_a, atoms_b = np.mean(n1a + n2a), np.mean(n1b + n2b)
        for label, mask, (n1, n2) in (("A", masks[0], (n1a, n2a)), ("B", masks[1], (n1b, n2b))):
            prof = build_profile(density, psf, mask, noise_model, supersample)
            fl = local_fluctuations(n1, n2, prof.eta_eff, prof.noise_var_counts)
            rows.append(
                {
                    "gap_center": int(c),
                    "region": label,
                    "splitting_ratio": float(atoms_a / (atoms_a + atoms_b)),
                    "eta_eff": prof.eta_eff,
                    "eta_state1": prof.eta_states[1],
                    "eta_state2": prof.eta_states[2],
                    "eta_mixture": eta_mixture(density, psf, mask, supersample=supersample),
                    **fl,
                }
            )
    return rows
